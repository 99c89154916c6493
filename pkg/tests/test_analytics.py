import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fiberpol.analytics import (
    DELTA,
    EPS0,
    EPS1,
    TRACE_TENSOR,
    DegenerateModelError,
    HypothesisError,
    conjugation_operator,
    diag_prediction,
    eta1,
    eta1_pair,
    f_beta,
    f_beta_numeric,
    h_classical,
    h_new,
    hermitian_to_vector,
    mean_operator_16,
    mean_segment_operator,
    p2_asymptotic,
    p2_exact,
    tensor_vector,
)
from fiberpol.ensemble import mc_mean_p2, mc_mean_u
from fiberpol.process import (
    ExponentialLength,
    FiberModel,
    FixedLength,
    GaussianTwist,
    TwoPointTwist,
    UniformLength,
    UniformTwist,
)
from fiberpol.propagation import CoherenceMatrix, SpectralDensity
from fiberpol.su2 import SIGMA, DomainError

REF = FiberModel(TwoPointTwist(0.1), ExponentialLength(1.0))
SYMMETRIC_MODELS = [
    REF,
    FiberModel(UniformTwist.symmetric(0.3), ExponentialLength(1.0)),
    FiberModel(GaussianTwist(0.0, 0.2), FixedLength(0.8)),
    FiberModel(TwoPointTwist(0.4), UniformLength(0.5, 1.5)),
]

cplx = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
reals = st.floats(-3, 3)


def hermitian(a, b, c):
    return np.array([[a, c], [np.conj(c), b]])


@given(reals, reals, cplx)
def test_delta_vector_gives_determinant(a, b, c):
    h = hermitian(a, b, c)
    assert tensor_vector(h, h) @ DELTA == pytest.approx(np.linalg.det(h).real, abs=1e-12 * (1 + abs(a * b) + abs(c) ** 2))


@given(reals, reals, cplx, reals, reals, cplx)
def test_trace_tensor_gives_trace_of_product(a, b, c, d, e, f):
    x, y = hermitian(a, b, c), hermitian(d, e, f)
    assert tensor_vector(x, y) @ TRACE_TENSOR == pytest.approx(np.trace(x @ y).real, abs=1e-11)


def test_basis_vectors():
    np.testing.assert_allclose(hermitian_to_vector(np.eye(2)), [math.sqrt(2), 0, 0, 0])
    assert EPS0 @ EPS1 == 0 and EPS1 @ EPS1 == 3


def test_reference_values():
    # exponential(1) lengths: <sin^2(l/2)> = 1/4, so h_classical = 4 * 0.01 / 4
    assert h_classical(REF, 1.0) == pytest.approx(0.01, abs=1e-12)
    e = eta1(REF, 1.0)
    assert 0.97 < e < 0.99
    assert h_new(REF, 1.0) == pytest.approx(-math.log(e) / 2)


@pytest.mark.parametrize("l0,beta,theta", [(1.0, 1.0, 0.1), (0.3, 2.0, 0.05), (2.5, 0.7, 0.3)])
def test_h_classical_fixed_length(l0, beta, theta):
    m = FiberModel(TwoPointTwist(theta), FixedLength(l0))
    want = 4 * theta**2 * math.sin(l0 * beta / 2) ** 2 / (beta**2 * l0)
    assert abs(h_classical(m, beta) - want) <= 1e-10


@pytest.mark.parametrize("model", SYMMETRIC_MODELS)
def test_eta1_is_sigma1_entry_of_mean_conjugation(model):
    r = conjugation_operator(model, 1.2)
    assert r[1, 1] == pytest.approx(eta1(model, 1.2), abs=1e-10)
    assert r[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_diag_prediction_from_operator_power():
    r = conjugation_operator(REF, 1.0)
    j0 = CoherenceMatrix(0.8, 0.2, 0.3 + 0.1j)
    e = eta1(REF, 1.0)
    v = np.linalg.matrix_power(r, 37) @ hermitian_to_vector(j0.matrix)
    j = np.einsum("j,jab->ab", v, SIGMA / math.sqrt(2))
    d11, d22 = diag_prediction(j0, e, 37)
    assert j[0, 0].real == pytest.approx(d11, abs=1e-10)
    assert j[1, 1].real == pytest.approx(d22, abs=1e-10)


def test_hypothesis_errors():
    shifted = FiberModel(TwoPointTwist(0.1, shift=0.05), ExponentialLength(1.0))
    with pytest.raises(HypothesisError):
        eta1(shifted, 1.0)
    with pytest.raises(HypothesisError):
        f_beta(shifted, 1.0)
    # sin^2(l theta) = 1 for every section: eta1 = -1
    strong = FiberModel(TwoPointTwist(10.0), FixedLength(math.pi / 20))
    assert eta1(strong, 0.0) == pytest.approx(-1.0)
    with pytest.raises(HypothesisError):
        h_new(strong, 0.0)
    with pytest.raises(DomainError):
        h_classical(REF, 0.0)


def test_zero_twist():
    m = FiberModel(TwoPointTwist(0.0), ExponentialLength(1.0))
    assert h_new(m, 1.0) == 0.0 and h_classical(m, 1.0) == 0.0
    with pytest.raises(DegenerateModelError):
        f_beta(m, 1.0)


@pytest.mark.parametrize("theta", [0.3, 0.1, 0.03, 0.01])
def test_h_ratio_close_to_one(theta):
    m = FiberModel(TwoPointTwist(theta), ExponentialLength(1.0))
    assert abs(h_new(m, 1.0) / h_classical(m, 1.0) - 1) < 3 * 4 * theta**2 / 2


@pytest.mark.parametrize("beta", np.linspace(0.3, 3.0, 10))
def test_f_closed_form_matches_eigenvalue_curvature(beta):
    assert f_beta(REF, beta) == pytest.approx(f_beta_numeric(REF, beta), rel=1e-4)


def test_f_reference_closed_form():
    # exponential(1) lengths with |theta| = 0.1 give f = (100/3)(1 + beta^2)
    for beta in (0.5, 1.0, 2.0):
        assert f_beta(REF, beta) == pytest.approx(100 / 3 * (1 + beta * beta), rel=1e-9)


@pytest.mark.parametrize("model", SYMMETRIC_MODELS[1:])
def test_f_other_models(model):
    assert f_beta(model, 1.1) == pytest.approx(f_beta_numeric(model, 1.1), rel=1e-4)
    assert f_beta(model, 1.1, general=True) == pytest.approx(f_beta(model, 1.1), rel=1e-8)


def test_f_general_for_regular_twist():
    m = FiberModel(TwoPointTwist(0.2, shift=0.1), ExponentialLength(1.0))
    assert f_beta(m, 1.0, general=True) == pytest.approx(f_beta_numeric(m, 1.0), rel=1e-4)


@given(st.floats(0.2, 3.0))
def test_f_even(beta):
    assert f_beta(REF, beta) == pytest.approx(f_beta(REF, -beta), rel=1e-12)


def test_operator16_invariants():
    same = mean_operator_16(REF, 1.0, 1.0)
    for v in (EPS0, EPS1, DELTA, TRACE_TENSOR):
        np.testing.assert_allclose(same.apply(v), v, atol=1e-12)
    assert eta1_pair(REF, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    apart = mean_operator_16(REF, 1.0, 2.0)
    np.testing.assert_allclose(apart.apply(EPS0), EPS0, atol=1e-12)
    assert eta1_pair(REF, 1.0, 2.0) < 0.99
    assert apart.operator_norm() <= 1.0 + 1e-12


def test_operator16_diagonal_block_is_conjugation_square():
    # the 16x16 average at equal frequencies contracted with s_0 on the second
    # factor reproduces the 4x4 average
    op = mean_operator_16(REF, 1.3, 1.3).matrix.reshape(4, 4, 4, 4)
    np.testing.assert_allclose(op[:, 0, :, 0], conjugation_operator(REF, 1.3), atol=1e-12)


def test_mean_segment_operator():
    s = mean_segment_operator(REF, 1.0)
    assert s.spectral_radius < 1.0 and np.all(s.projector == 0)
    trivial = mean_segment_operator(FiberModel(TwoPointTwist(0.0), FixedLength(1.0)), 0.0)
    np.testing.assert_allclose(trivial.projector, np.eye(2))
    np.testing.assert_allclose(trivial.s, np.eye(2), atol=1e-15)


def test_mean_product_matches_monte_carlo():
    m = FiberModel(TwoPointTwist(0.3), ExponentialLength(1.0), seed=11)
    n = 5
    mean, se = mc_mean_u(m, 1.0, n, 20_000)
    want = mean_segment_operator(m, 1.0).power(n)
    assert np.all(np.abs(mean.real - want.real) <= 4 * se[..., 0] + 1e-12)
    assert np.all(np.abs(mean.imag - want.imag) <= 4 * se[..., 1] + 1e-12)


def test_exact_p2_matches_monte_carlo():
    m = FiberModel(TwoPointTwist(0.1), ExponentialLength(1.0), seed=3)
    spec = SpectralDensity.flat(0.8, 1.2, 5)
    exact = p2_exact(m, spec, [16, 64])
    mc, se = mc_mean_p2(m, spec, [16, 64], 4000)
    assert np.all(np.abs(mc - exact) <= 4 * se)


def test_resolved_spectrum_follows_asymptotic_law():
    # with the spectrum resolved on the decorrelation scale, the exact mean
    # approaches sqrt(2 pi / N) int Bn^2 / sqrt(f) with coefficient 1
    spec = SpectralDensity.flat(0.9, 1.1, 21)
    ns = [256, 512]
    exact = p2_exact(REF, spec, ns)
    for n, val in zip(ns, exact):
        assert val / p2_asymptotic(REF, spec, n).leading == pytest.approx(1.0, abs=0.05)


def test_asymptotic_input_checks():
    with pytest.raises(DomainError):
        p2_asymptotic(REF, SpectralDensity.line(1.0), 64)
    with pytest.raises(DomainError):
        p2_asymptotic(REF, SpectralDensity.flat(0.9, 1.1, 3), 0)
