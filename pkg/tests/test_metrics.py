import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import cumulative_simpson
from scipy.stats import wasserstein_distance

from conftest import random_model
from rootdist.metrics import (
    MetricConfig,
    distance,
    optimal_assignment,
    otrd,
    pole_measure,
    quantile_levels,
    rd,
    sort_poles,
    sorted_assignment,
    w_closed,
    w_discrete,
    welch_periodogram,
    wrd,
)
from rootdist.model import (
    DiscreteSpectrum,
    RationalModel,
    Signal,
    normalize_energy,
    residues,
    scale_poles,
    spectrum_at,
)
from rootdist.transport import DiscreteMeasure, TransportConfig, exact_ot


def pair(seed, n):
    rng = np.random.default_rng(seed)
    return random_model(rng, n), random_model(rng, n)


# -- assignments ----------------------------------------------------------------


def test_sort_poles_orders_by_imag_then_real():
    m = sort_poles(RationalModel([-1 + 2j, -3 + 0j, -1 - 2j, -2 + 0j]))
    np.testing.assert_array_equal(m.poles, [-1 - 2j, -3, -2, -1 + 2j])


def test_sorted_assignment_example():
    perm = sorted_assignment(np.array([3j, -1j, 0j]), np.array([0j, 5j, -2j]))
    np.testing.assert_array_equal(perm, [1, 2, 0])


def test_optimal_assignment_matches_brute_force(rng):
    for n in range(1, 7):
        q = rng.normal(size=n) + 1j * rng.normal(size=n)
        z = rng.normal(size=n) + 1j * rng.normal(size=n)
        perm = optimal_assignment(q, z, 2)
        best = min(np.sum(np.abs(q - z[list(s)]) ** 2) for s in itertools.permutations(range(n)))
        assert np.sum(np.abs(q - z[perm]) ** 2) == pytest.approx(best, rel=1e-12)


def test_sorted_assignment_can_be_far_from_optimal():
    q = np.array([-0.01 + 1j, -5 + 1.1j])
    z = np.array([-0.01 + 1.1j, -5 + 1j])
    perm = optimal_assignment(q, z, 2)
    np.testing.assert_array_equal(perm, [0, 1])
    assert np.sum(np.abs(q - z[perm]) ** 2) == pytest.approx(0.02)
    s = sorted_assignment(q, z)
    # sorting by imaginary part pairs the two near-axis poles with the far ones
    assert np.sum(np.abs(q - z[s]) ** 2) == pytest.approx(2 * 4.99**2, rel=1e-12)


def test_assignment_size_mismatch():
    with pytest.raises(ValueError):
        optimal_assignment(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        sorted_assignment(np.zeros(2), np.zeros(3))


# -- rd ---------------------------------------------------------------------------


def test_rd_example():
    m1 = RationalModel([-1 + 1j, -1 - 1j])
    m2 = RationalModel([-2 + 1j, -2 - 1j])
    assert rd(m1, m2).value == pytest.approx(np.sqrt(2.0), rel=1e-15)
    assert rd(m1, m2, MetricConfig(p=1)).value == pytest.approx(2.0, rel=1e-15)


def test_rd_ignores_pole_order_and_rejects_order_mismatch():
    m1 = RationalModel([-1 + 1j, -1 - 1j, -0.5])
    m2 = RationalModel([-0.5, -1 - 1j, -1 + 1j])
    assert rd(m1, m2).value == 0.0
    with pytest.raises(ValueError, match="orders differ"):
        rd(m1, RationalModel([-1.0]))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_rd_optimal_never_exceeds_sorted(seed, n):
    m1, m2 = pair(seed, n)
    assert rd(m1, m2, MetricConfig(assignment="optimal")).raw <= rd(m1, m2).raw + 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_rd_sorted_is_a_metric(seed, n):
    rng = np.random.default_rng(seed)
    a, b, c = (random_model(rng, n) for _ in range(3))
    ab, bc, ac = rd(a, b).value, rd(b, c).value, rd(a, c).value
    assert ab == pytest.approx(rd(b, a).value, rel=1e-14)
    assert ac <= ab + bc + 1e-12


# -- wrd --------------------------------------------------------------------------


def test_wrd_hand_computed_example():
    # w = pi g^2 / |p| for a single real pole: w1 = pi, w2 = 2 pi
    # term = (w1 w2)^(-1/2) |w1 q - w2 z|^2 = 9 pi / sqrt(2)
    m1 = RationalModel([-1.0], gain=1.0)
    m2 = RationalModel([-2.0], gain=2.0)
    assert wrd(m1, m2).raw == pytest.approx(9 * np.pi / np.sqrt(2), rel=1e-14)


def test_wrd_p1_is_unweighted_distance_of_scaled_poles():
    m1 = RationalModel([-1.0], gain=1.0)
    m2 = RationalModel([-3.0], gain=1.0)
    # p = 1: beta = 0, so the term is just |w1 q - w2 z|
    w1, w2 = residues(m1, 1).weights[0], residues(m2, 1).weights[0]
    assert wrd(m1, m2, MetricConfig(p=1)).raw == pytest.approx(abs(-w1 + 3 * w2), rel=1e-14)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_wrd_basic_properties(seed, n):
    m1, m2 = pair(seed, n)
    assert wrd(m1, m1).raw == pytest.approx(0.0, abs=1e-20)
    assert wrd(m1, m2).raw == pytest.approx(wrd(m2, m1).raw, rel=1e-12)
    opt = wrd(m1, m2, MetricConfig(assignment="optimal")).raw
    assert opt <= wrd(m1, m2).raw * (1 + 1e-12)


# -- otrd -------------------------------------------------------------------------


def test_otrd_single_poles_is_pole_distance():
    m1 = RationalModel([-1 + 2j])
    m2 = RationalModel([-4 - 2j])
    assert otrd(m1, m2).value == pytest.approx(5.0, rel=1e-14)
    assert otrd(m1, m2, MetricConfig(p=1)).value == pytest.approx(5.0, rel=1e-14)


def test_otrd_allows_different_orders(rng):
    m1, m2 = random_model(rng, 3), random_model(rng, 6)
    r = otrd(m1, m2)
    assert r.value > 0
    np.testing.assert_allclose(r.plan.coupling.sum(1), pole_measure(m1).masses, atol=1e-14)


def test_pole_measure_masses_are_residue_weights(rng):
    m = random_model(rng, 4)
    w = residues(m).weights
    np.testing.assert_array_equal(pole_measure(m, normalize=False).masses, w)
    np.testing.assert_allclose(pole_measure(m).masses, w / w.sum(), rtol=1e-15)
    np.testing.assert_array_equal(pole_measure(m).atoms, m.poles)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_otrd_matches_direct_transport(seed, n, k):
    rng = np.random.default_rng(seed)
    m1, m2 = random_model(rng, n), random_model(rng, k)
    direct = exact_ot(pole_measure(m1), pole_measure(m2), TransportConfig(p=2)).objective
    assert otrd(m1, m2).raw == pytest.approx(direct, rel=1e-12)
    assert otrd(m1, m1).raw == pytest.approx(0.0, abs=1e-14)


def test_otrd_sinkhorn_close_to_exact(rng):
    m1, m2 = random_model(rng, 4), random_model(rng, 4)
    exact = otrd(m1, m2).raw
    approx = otrd(m1, m2, MetricConfig(solver="sinkhorn", transport=TransportConfig(regularization=1000.0)))
    assert approx.raw == pytest.approx(exact, rel=0.01)


def test_otrd_unbalanced_runs_on_raw_weights(rng):
    m1, m2 = random_model(rng, 2), random_model(rng, 4)
    r = otrd(m1, m2, MetricConfig(solver="unbalanced"))
    assert np.isfinite(r.value) and r.plan is not None


def test_metric_config_validation():
    for kw in ({"p": 0.5}, {"assignment": "greedy"}, {"variant": "l2"}, {"solver": "lp"}):
        with pytest.raises(ValueError):
            MetricConfig(**kw)


# -- w_closed ---------------------------------------------------------------------


def test_quantile_levels_cover_unit_interval():
    e = quantile_levels()
    assert e[0] == 0.0 and e[-1] == 1.0
    assert np.all(np.diff(e) > 0)
    assert e[1] == pytest.approx(1e-10)
    assert 1 - e[-2] == pytest.approx(1e-10, rel=1e-5)


def test_w_closed_of_shifted_lorentzians_is_the_shift():
    m1 = normalize_energy(RationalModel([-0.5 + 1j]))
    m2 = normalize_energy(RationalModel([-0.5 + 3j]))
    for p in (1, 2):
        assert w_closed(m1, m2, MetricConfig(p=p)).value == pytest.approx(2.0, rel=1e-8)


def test_w1_matches_cumulative_difference_integral(rng):
    # in one dimension W1 = int |F1 - F2|, an identity independent of quantiles;
    # F is integrated numerically from the sampled spectrum
    grid = np.concatenate([np.linspace(0, 20, 400001), np.geomspace(20, 1e5, 40001)[1:]])
    for _ in range(3):
        m1, m2 = random_model(rng, 3), random_model(rng, 4)
        F1 = 2 * cumulative_simpson(spectrum_at(m1, grid), x=grid, initial=0)
        F2 = 2 * cumulative_simpson(spectrum_at(m2, grid), x=grid, initial=0)
        expected = np.trapezoid(np.abs(F1 - F2), grid)
        assert w_closed(m1, m2, MetricConfig(p=1)).value == pytest.approx(expected, rel=5e-6)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 2.0]), st.sampled_from([1.0, 2.0]))
def test_w_closed_scales_with_pole_dilation(seed, alpha, p):
    m1, m2 = pair(seed, 4)
    d = w_closed(m1, m2, MetricConfig(p=p)).value
    s = w_closed(
        normalize_energy(scale_poles(m1, alpha)), normalize_energy(scale_poles(m2, alpha)), MetricConfig(p=p)
    ).value
    assert s == pytest.approx(alpha * d, rel=1e-6)


def test_w_closed_requires_unit_energy():
    with pytest.raises(ValueError, match="normalize"):
        w_closed(RationalModel([-1.0]), normalize_energy(RationalModel([-2.0])))


def test_w_closed_is_symmetric_and_zero_on_self(rng):
    m1, m2 = random_model(rng, 4), random_model(rng, 4)
    assert w_closed(m1, m1).value == 0.0
    assert w_closed(m1, m2).value == pytest.approx(w_closed(m2, m1).value, rel=1e-12)


# -- w_discrete / welch -------------------------------------------------------------


def test_w_discrete_matches_scipy_for_p1(rng):
    for _ in range(20):
        x = np.sort(rng.uniform(0, 10, 30))
        a, b = rng.uniform(0, 1, 30), rng.uniform(0, 1, 30)
        d = w_discrete(DiscreteSpectrum(x, a), DiscreteSpectrum(x, b), p=1).value
        assert d == pytest.approx(wasserstein_distance(x, x, a, b), rel=1e-10)


def test_w_discrete_matches_exact_transport_for_p2(rng):
    for _ in range(20):
        x = np.sort(rng.uniform(0, 10, 12))
        y = np.sort(rng.uniform(0, 10, 9))
        a, b = rng.uniform(0, 1, 12), rng.uniform(0, 1, 9)
        d = w_discrete(DiscreteSpectrum(x, a), DiscreteSpectrum(y, b), p=2).raw
        lp = exact_ot(DiscreteMeasure(x, a / a.sum()), DiscreteMeasure(y, b / b.sum())).objective
        assert d == pytest.approx(lp, rel=1e-10)


def test_w_discrete_point_masses():
    s1 = DiscreteSpectrum(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0]))
    s2 = DiscreteSpectrum(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.0, 3.0]))
    assert w_discrete(s1, s2).value == pytest.approx(1.0)
    with pytest.raises(ValueError):
        w_discrete(s1, s2, normalize=False)


def test_welch_white_noise_level(rng):
    fs = 100.0
    x = Signal(rng.standard_normal(200000), sample_rate=fs)
    s = welch_periodogram(x, 256)
    # one-sided density per rad/s of unit-variance white noise is 1 / (pi fs)
    inner = s.density[1:-1]
    assert np.mean(inner) == pytest.approx(1 / (np.pi * fs), rel=0.02)
    assert np.trapezoid(s.density, s.frequencies) == pytest.approx(1.0, rel=0.02)
    assert s.frequencies[-1] == pytest.approx(np.pi * fs)


def test_welch_errors(rng):
    with pytest.raises(ValueError):
        welch_periodogram(Signal(rng.standard_normal(100)), 256)
    with pytest.raises(ValueError):
        welch_periodogram(Signal(rng.standard_normal(100)), 1)


# -- dispatcher -------------------------------------------------------------------


def test_distance_dispatch(rng):
    m1, m2 = random_model(rng, 4), random_model(rng, 4)
    for variant, fn in (("rd", rd), ("wrd", wrd), ("otrd", otrd), ("w_closed", w_closed)):
        assert distance(m1, m2, MetricConfig(variant=variant)).value == fn(m1, m2).value
    with pytest.raises(ValueError):
        distance(m1, m2, MetricConfig(variant="w_discrete"))
