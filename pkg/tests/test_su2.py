import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from fiberpol.su2 import (
    SIGMA,
    DomainError,
    FieldVector,
    JonesMatrix,
    SegmentParams,
    apply,
    as_matrices,
    compose,
    conjugation_rep,
    segment_coefficients,
    segment_coefficients_dbeta,
    segment_matrix,
    segment_matrix_dbeta,
)

betas = st.floats(-20, 20, allow_nan=False)
thetas = st.floats(-5, 5, allow_nan=False)
lengths = st.floats(1e-6, 10, allow_nan=False)


def generator(beta, theta):
    return np.array([[0.5j * beta, theta], [-theta, -0.5j * beta]])


@given(betas, lengths, thetas)
def test_segment_matches_matrix_exponential(beta, l, theta):
    m = segment_matrix(SegmentParams(beta, l, theta)).matrix
    np.testing.assert_allclose(m, expm(l * generator(beta, theta)), atol=1e-11)


@given(betas, lengths, thetas)
def test_coefficients_on_unit_sphere(beta, l, theta):
    m0, m1, m3 = segment_coefficients(beta, l, theta)
    assert abs(m0**2 + m1**2 + m3**2 - 1.0) < 1e-12


@given(betas, lengths, thetas)
def test_unitary_with_unit_determinant(beta, l, theta):
    m = segment_matrix(SegmentParams(beta, l, theta)).matrix
    np.testing.assert_allclose(m @ m.conj().T, np.eye(2), atol=1e-12)
    assert abs(np.linalg.det(m) - 1.0) < 1e-12


@given(betas, lengths, lengths, thetas)
def test_one_parameter_group(beta, l1, l2, theta):
    a = segment_matrix(SegmentParams(beta, l1, theta))
    b = segment_matrix(SegmentParams(beta, l2, theta))
    c = segment_matrix(SegmentParams(beta, l1 + l2, theta))
    np.testing.assert_allclose((a @ b).matrix, c.matrix, atol=1e-10)


def test_zero_rates_give_identity():
    m = segment_matrix(SegmentParams(0.0, 3.0, 0.0))
    assert m.a == 1 and m.b == 0


def test_closed_form_coefficients():
    beta, l, theta = 1.3, 0.7, 0.4
    bt = math.sqrt(beta**2 + 4 * theta**2)
    m0, m1, m3 = segment_coefficients(beta, l, theta)
    assert m0 == pytest.approx(math.cos(l * bt / 2), abs=1e-15)
    assert m1 == pytest.approx(beta / bt * math.sin(l * bt / 2), abs=1e-15)
    assert m3 == pytest.approx(2 * theta / bt * math.sin(l * bt / 2), abs=1e-15)


def test_small_argument_is_continuous():
    # series branch against the direct formula just outside it
    for x in (1e-7, 1e-6, 2e-6, 1e-3):
        m = segment_coefficients(x, 1.0, x)
        bt = x * math.sqrt(5)
        assert m[1] == pytest.approx(x / bt * math.sin(bt / 2), rel=1e-12)


@pytest.mark.parametrize("beta", [-3.0, -0.5, 0.0, 1e-5, 0.3, 1.0, 2.5, 7.0])
@pytest.mark.parametrize("l", [1e-3, 0.2, 1.0, 4.0])
@pytest.mark.parametrize("theta", [0.0, 0.01, 0.1, 1.5])
def test_beta_derivative_matches_finite_difference(beta, l, theta):
    h = 1e-4 * max(1.0, abs(beta))
    up = np.array(segment_coefficients(beta + h, l, theta))
    dn = np.array(segment_coefficients(beta - h, l, theta))
    up2 = np.array(segment_coefficients(beta + 2 * h, l, theta))
    dn2 = np.array(segment_coefficients(beta - 2 * h, l, theta))
    fd = (8 * (up - dn) - (up2 - dn2)) / (12 * h)
    an = np.array(segment_coefficients_dbeta(beta, l, theta))
    scale = max(np.max(np.abs(an)), 1e-3 * l)
    np.testing.assert_allclose(an, fd, rtol=0, atol=1e-6 * scale)


def test_matrix_derivative_layout():
    p = SegmentParams(0.8, 1.1, 0.3)
    h = 1e-6
    fd = (segment_matrix(SegmentParams(p.beta + h, p.l, p.theta)).matrix
          - segment_matrix(SegmentParams(p.beta - h, p.l, p.theta)).matrix) / (2 * h)
    np.testing.assert_allclose(segment_matrix_dbeta(p), fd, atol=1e-8)


def test_long_product_stays_unitary():
    rng = np.random.default_rng(3)
    m = JonesMatrix.identity()
    for beta, l, t in zip(rng.uniform(0, 3, 100_000), rng.exponential(1, 100_000), rng.choice([-0.1, 0.1], 100_000)):
        m = compose(segment_matrix(SegmentParams(beta, l, t)), m)
    assert abs(m.det - 1.0) < 1e-12


@given(betas, lengths, thetas, betas, lengths, thetas)
def test_compose_matches_dense_product(b1, l1, t1, b2, l2, t2):
    m1 = segment_matrix(SegmentParams(b1, l1, t1))
    m2 = segment_matrix(SegmentParams(b2, l2, t2))
    np.testing.assert_allclose(compose(m2, m1).matrix, m2.matrix @ m1.matrix, atol=1e-12)


def test_apply_and_adjoint():
    m = segment_matrix(SegmentParams(1.0, 0.9, 0.2))
    v = FieldVector(0.6, 0.8j)
    out = apply(m, v)
    assert out.norm == pytest.approx(1.0, abs=1e-14)
    back = apply(m.adjoint(), out)
    assert abs(back.ex - v.ex) < 1e-14 and abs(back.ey - v.ey) < 1e-14


def test_conjugation_rep_is_orthogonal_and_fixes_identity():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(50, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    m = as_matrices(q[:, 0] + 1j * q[:, 1], q[:, 2] + 1j * q[:, 3])
    r = conjugation_rep(m)
    np.testing.assert_allclose(r @ np.swapaxes(r, -1, -2), np.broadcast_to(np.eye(4), r.shape), atol=1e-12)
    np.testing.assert_allclose(r[:, 0, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(r[:, 0, 1:], 0.0, atol=1e-14)


def test_conjugation_rep_entry_definition():
    m = segment_matrix(SegmentParams(0.4, 1.7, 0.9)).matrix
    r = conjugation_rep(m)
    s = SIGMA / math.sqrt(2)
    for k in range(4):
        for i in range(4):
            want = np.trace(m @ s[i] @ m.conj().T @ s[k]).real
            assert r[k, i] == pytest.approx(want, abs=1e-14)


def test_pauli_basis_orthonormal():
    s = SIGMA / math.sqrt(2)
    gram = np.einsum("iab,jba->ij", s, s)
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-15)


@pytest.mark.parametrize("args", [(1.0, 0.0, 0.1), (1.0, -1.0, 0.1), (math.nan, 1.0, 0.0), (1.0, 1.0, math.inf)])
def test_bad_segment_params(args):
    with pytest.raises(DomainError):
        SegmentParams(*args)


def test_non_unitary_rejected():
    with pytest.raises(DomainError):
        JonesMatrix(1.0, 0.5)
