import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fiberpol.analytics import eta1, h_classical
from fiberpol.ensemble import (
    Accumulator,
    all_moments,
    classical_h_mc,
    haar_moment,
    haar_moment_test,
    independence_test,
    mc_coherence_continuous,
    mc_coherence_curve,
    mc_mean_coherence,
    mc_mean_p2,
)
from fiberpol.process import ExponentialLength, FiberModel, FixedLength, TwoPointTwist
from fiberpol.propagation import SpectralDensity

samples = arrays(np.float64, st.integers(2, 40), elements=st.floats(-1e3, 1e3))


@given(samples, samples, samples)
def test_accumulator_merge_associative(x, y, z):
    a, b, c = (Accumulator.from_samples(v) for v in (x, y, z))
    left, right = (a + b) + c, a + (b + c)
    whole = Accumulator.from_samples(np.concatenate([x, y, z]))
    for acc in (left, right):
        assert acc.count == whole.count
        assert acc.mean == pytest.approx(whole.mean, abs=1e-9)
        assert acc.m2 == pytest.approx(whole.m2, rel=1e-9, abs=1e-6)


def test_accumulator_matches_numpy():
    x = np.random.default_rng(0).normal(size=(1000, 3))
    acc = Accumulator.from_samples(x[:300]) + Accumulator.from_samples(x[300:])
    np.testing.assert_allclose(acc.variance, x.var(axis=0, ddof=1))
    np.testing.assert_allclose(acc.stderr, x.std(axis=0, ddof=1) / math.sqrt(1000))


def test_results_independent_of_threads(reference_model):
    one = mc_coherence_curve(reference_model, 1.0, [0, 10, 50], 3000, threads=1, block_size=256)
    three = mc_coherence_curve(reference_model, 1.0, [0, 10, 50], 3000, threads=3, block_size=256)
    assert np.array_equal(one.mean, three.mean) and np.array_equal(one.stderr, three.stderr)


def test_zero_sections_is_initial_state(reference_model):
    j, se = mc_mean_coherence(reference_model, 1.0, 0, 100)
    assert (j.j11, j.j22, j.j12) == (1.0, 0.0, 0j)
    assert np.all(se == 0)


def test_curve_follows_prediction(reference_model):
    ns = list(range(0, 301, 20))
    curve = mc_coherence_curve(reference_model, 1.0, ns, 4000)
    e = eta1(reference_model, 1.0)
    pred = 0.5 * (1 + e ** np.array(ns))
    ok = np.abs(curve.mean[:, 0] - pred) <= 4 * curve.stderr[:, 0] + 1e-12
    assert ok.mean() >= 0.9
    np.testing.assert_allclose(curve.mean[:, 0] + curve.mean[:, 1], 1.0, atol=1e-12)


def test_continuous_curve_tracks_discrete(reference_model):
    ns = np.arange(0, 201, 40)
    disc = mc_coherence_curve(reference_model, 1.0, ns, 4000)
    cont = mc_coherence_continuous(reference_model, 1.0, ns * reference_model.mean_length, 4000)
    se = np.hypot(disc.stderr[:, 0], cont.stderr[:, 0])
    assert np.all(np.abs(disc.mean[:, 0] - cont.mean[:, 0]) <= 4 * se + 1e-12)


def test_single_line_stays_polarized(reference_model):
    mean, se = mc_mean_p2(reference_model, SpectralDensity.line(1.0), [0, 50, 200], 200)
    np.testing.assert_allclose(mean, 1.0, atol=1e-12)


def test_haar_formula_against_uniform_sphere():
    q = np.random.default_rng(1).normal(size=(400_000, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    a, b = q[:, 0] + 1j * q[:, 1], q[:, 2] + 1j * q[:, 3]
    for k in all_moments(4):
        v = a ** k[0] * np.conj(a) ** k[1] * b ** k[2] * np.conj(b) ** k[3]
        se = max(v.real.std(), v.imag.std()) / math.sqrt(len(v))
        assert abs(v.mean() - haar_moment(k)) <= 5 * se + 1e-12


def test_haar_values():
    assert haar_moment((1, 1, 0, 0)) == 0.5
    assert haar_moment((2, 2, 0, 0)) == pytest.approx(1 / 3)
    assert haar_moment((1, 1, 1, 1)) == pytest.approx(1 / 6)
    assert haar_moment((1, 0, 0, 0)) == 0.0
    assert len(all_moments(4)) == 70


def test_haar_report_short_fiber_fails(reference_model):
    # after a single section U is nowhere near Haar distributed
    rep = haar_moment_test(reference_model, 1.0, 1, 2000, moments=[(1, 1, 0, 0), (2, 2, 0, 0)])
    assert not rep.passed()


def test_haar_report_long_fiber(reference_model):
    rep = haar_moment_test(reference_model, 1.0, 400, 5000)
    assert rep.passed()
    assert len(rep.rows) == 70


def test_haar_zero_stderr_handling():
    # theta = 0: U is diagonal, b == 0 exactly, so b-moments have zero error
    m = FiberModel(TwoPointTwist(0.0), FixedLength(1.0))
    rep = haar_moment_test(m, 1.0, 10, 50, moments=[(0, 0, 1, 1), (0, 0, 1, 0)])
    z = {r.k: r.zscore for r in rep.rows}
    assert z[(0, 0, 1, 1)] == math.inf  # exactly 0 against 1/2
    assert z[(0, 0, 1, 0)] == 0.0  # exactly 0 against 0


def test_independence_positive_control(reference_model):
    rep = independence_test(reference_model, 1.0, 1.0, 50, 500)
    assert rep.zscores()[0].max() > 10
    np.testing.assert_allclose(rep.mean[0], np.eye(2), atol=1e-12)


def test_independence_separated(reference_model):
    rep = independence_test(reference_model, 1.0, 2.0, 400, 4000)
    assert rep.zscores().max() <= 4.5


def test_classical_h_mc(reference_model):
    est, se = classical_h_mc(reference_model, 1.0, 2000.0, 400)
    assert abs(est - h_classical(reference_model, 1.0)) <= 4 * se


def test_input_validation(reference_model):
    with pytest.raises(ValueError):
        mc_coherence_curve(reference_model, 1.0, [-1], 10)
    with pytest.raises(ValueError):
        haar_moment_test(reference_model, 1.0, 5, 10, moments=[(1, 1, 0)])
    with pytest.raises(ValueError):
        classical_h_mc(reference_model, 1.0, 0.0, 10)
