import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphwave.calculus import laplacian_apply
from graphwave.cutoff import (ProfileError, cutoff_family, default_s, make_profiles, premise_margins,
                              psi_coefficients, verify_cutoff_bounds, zero_propagation_check)
from graphwave.graph import build_graph, lattice_zn, path_graph, random_connected_graph
from graphwave.metric import TruncationError, distance_map


@pytest.fixture(scope="module")
def prof():
    return make_profiles(0.5, 1.0, 5)


def test_phi_values(prof):
    assert prof.phi(0.5) == 1.0
    assert prof.phi(3.0) == 0.0
    assert prof.phi(1.5) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("delta", [0.1, 0.5, 1.0, 3.0])
def test_psi_tail(delta):
    p = make_profiles(delta, 1.0, 5).psi
    assert p(2.0) == pytest.approx(math.exp(-2 * delta), rel=1e-15)
    assert p(5.0) == pytest.approx(math.exp(-5 * delta), rel=1e-15)
    assert p(-1.0) == 1.0


def test_psi_bridge_interpolates():
    delta = 0.7
    c = psi_coefficients(delta)
    e = math.exp(-2 * delta)
    assert 1 + c.sum() == pytest.approx(e, rel=1e-14)
    assert 3 * c[0] + 4 * c[1] + 5 * c[2] == pytest.approx(-delta * e, rel=1e-13)
    assert 6 * c[0] + 12 * c[1] + 20 * c[2] == pytest.approx(delta ** 2 * e, rel=1e-13)


@pytest.mark.parametrize("name", ["phi", "eta", "psi"])
@pytest.mark.parametrize("r", [1.0, 2.0])
def test_junction_continuity(prof, name, r):
    p = getattr(prof, name)
    eps = 1e-12
    for f in (p.value, p.d1, p.d2):
        assert abs(f(r - eps) - f(r + eps)) < 1e-10


@pytest.mark.parametrize("name", ["phi", "eta", "psi"])
def test_derivatives_match_finite_differences(prof, name):
    p = getattr(prof, name)
    h = 1e-5
    # keep stencils off the junctions, where only two derivatives exist
    r = np.concatenate([np.linspace(0.31, 2.71, 97), [1 + 1e-3, 2 - 1e-3]])
    fd1 = (p.value(r + h) - p.value(r - h)) / (2 * h)
    fd2 = (p.d1(r + h) - p.d1(r - h)) / (2 * h)
    scale1 = np.abs(p.d1(r)).max()
    scale2 = np.abs(p.d2(r)).max()
    assert np.abs(fd1 - p.d1(r)).max() <= 1e-6 * scale1
    assert np.abs(fd2 - p.d2(r)).max() <= 1e-6 * scale2


@given(st.floats(0, 4))
def test_bump_shape(r):
    p = make_profiles(1.0, 1.0, 3)
    for prof in (p.phi, p.eta):
        assert 0.0 <= prof(r) <= 1.0
        assert prof.d1(r) <= 0.0


@given(st.floats(0.01, 8.0), st.floats(0.0, 3.0))
def test_psi_envelope(delta, j):
    p = make_profiles(delta, j, 3)
    r = np.concatenate([np.linspace(-j, 6, 2001)])
    w = np.exp(-delta * r)
    psi = p.psi.value(r)
    assert np.all(psi > 0)
    assert np.all(psi <= p.C1 * w * (1 + 1e-12))
    assert np.all(psi >= p.C2 * w * (1 - 1e-12))
    assert np.all(np.abs(p.psi.d1(r)) <= p.C1 * w * (1 + 1e-12))
    assert np.all(np.abs(p.psi.d2(r)) <= p.C1 * w * (1 + 1e-12))


@given(st.floats(1e-3, 60.0))
def test_psi_bridge_monotone(delta):
    p = make_profiles(delta, 1.0, 3).psi
    r = np.linspace(1.0, 2.0, 3001)
    assert np.all(p.d1(r) <= 0)
    assert np.all(np.diff(p.value(r)) <= 0)


@pytest.mark.parametrize("delta, j, s", [(0.0, 1, 3), (1.0, -1, 3), (1.0, 1, 1.0)])
def test_profile_parameter_errors(delta, j, s):
    with pytest.raises(ProfileError):
        make_profiles(delta, j, s)


@pytest.mark.parametrize("sigma, s", [(2.0, 5), (3.0, 4), (1.5, 7)])
def test_default_s(sigma, s):
    assert default_s(sigma) == s
    assert s > 2 * sigma / (sigma - 1)


@pytest.fixture(scope="module")
def plane():
    g = lattice_zn(2, 40)
    return g, distance_map(g, "euclidean")


def test_compact_one_on_ball(plane):
    g, d = plane
    fam = cutoff_family(g, d, "compact", 6, alpha=1.0, sigma=2.0)
    val = fam.value(0.0)
    assert np.all(val[d.dist <= 6] == 1.0)


def test_compact_support_in_Q(plane):
    g, d = plane
    fam = cutoff_family(g, d, "compact", 5, alpha=1.0, sigma=2.0)
    for t in np.linspace(0, 2 * fam.time_support, 50):
        assert np.all(fam.value(t)[~fam.in_Q(t)] == 0.0)
        assert np.all((fam.value(t) >= 0) & (fam.value(t) <= 1))


def test_compact_time_derivatives_match_fd(plane):
    g, d = plane
    fam = cutoff_family(g, d, "compact", 5, alpha=1.0, sigma=2.0)
    h = 1e-5
    for t in (1.0, 3.0, 4.5):
        fd = (fam.value(t + h) - fam.value(t - h)) / (2 * h)
        assert np.abs(fd - fam.dt(t)).max() <= 1e-6 * (np.abs(fam.dt(t)).max() + 1e-12)
        fd2 = (fam.dt(t + h) - fam.dt(t - h)) / (2 * h)
        assert np.abs(fd2 - fam.dtt(t)).max() <= 1e-6 * (np.abs(fam.dtt(t)).max() + 1e-12)


def test_exponential_time_derivatives_match_fd(plane):
    g, d = plane
    fam = cutoff_family(g, d, "exponential", 6, alpha=1.0, sigma=2.0, delta=0.5)
    h = 1e-5
    for t in (6.5, 8.0, 11.0):
        fd = (fam.value(t + h) - fam.value(t - h)) / (2 * h)
        assert np.abs(fd - fam.dt(t)).max() <= 1e-6 * np.abs(fam.dt(t)).max()
        fd2 = (fam.dt(t + h) - fam.dt(t - h)) / (2 * h)
        assert np.abs(fd2 - fam.dtt(t)).max() <= 1e-6 * np.abs(fam.dtt(t)).max()


def test_exponential_positive_and_flat_start(plane):
    g, d = plane
    fam = cutoff_family(g, d, "exponential", 4, alpha=1.0, sigma=2.0, delta=0.5)
    assert np.all(fam.dt(0.0) == 0.0)
    for t in (0.0, 3.0, 7.9):
        assert np.all(fam.value(t) > 0)
    assert np.all(fam.value(8.0) == 0)


def test_exponential_laplacian_vanishes_on_ball(plane):
    g, d = plane
    fam = cutoff_family(g, d, "exponential", 7, alpha=1.0, sigma=2.0, delta=0.5)
    lap = fam.laplacian(1.0)
    assert np.all(lap[d.dist <= 7] == 0.0)
    assert np.any(lap[d.dist > 7] != 0.0)
    direct = laplacian_apply(g, fam.value(1.0))
    assert np.allclose(direct[~g.boundary], lap[~g.boundary], rtol=0, atol=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(family="compact", R=4, theta1=1.0),
    dict(family="compact", R=4, theta1=2.0, theta2=8.0),
    dict(family="exponential", R=1.5, delta=0.5),
    dict(family="exponential", R=3, delta=0.5, R0=4),
    dict(family="exponential", R=3),
    dict(family="sideways", R=3),
])
def test_family_parameter_errors(plane, kwargs):
    g, d = plane
    fam = kwargs.pop("family")
    R = kwargs.pop("R")
    with pytest.raises(ValueError):
        cutoff_family(g, d, fam, R, alpha=1.0, sigma=2.0, **kwargs)


def test_s_must_exceed_critical(plane):
    g, d = plane
    with pytest.raises(ValueError, match="s must exceed"):
        cutoff_family(g, d, "compact", 4, alpha=1.0, sigma=2.0, s=4)


def test_compact_bounds_small(plane):
    g, d = plane
    fam = cutoff_family(g, d, "compact", 2, alpha=1.0, sigma=2.0)
    rep = verify_cutoff_bounds(fam, [2, 4, 8], n_t=120)
    assert sum(rep.violations["dt"]) == sum(rep.violations["dtt"]) == 0
    assert sum(rep.extras["support_escapes"]) == 0
    assert sum(rep.extras["convexity_violations"]) == 0
    assert rep.spread["dt"] <= 2 and rep.spread["dtt"] <= 2


def test_compact_bounds_window(plane):
    g, d = plane
    fam = cutoff_family(g, d, "compact", 4, alpha=1.0, sigma=2.0)
    with pytest.raises(TruncationError):
        verify_cutoff_bounds(fam, [4, 8, 16])


def test_exponential_bounds_small(plane):
    g, d = plane
    fam = cutoff_family(g, d, "exponential", 4, alpha=1.0, sigma=2.0, delta=0.5)
    rep = verify_cutoff_bounds(fam, [4, 6, 8], n_t=100)
    assert rep.indicator_clean
    assert max(rep.extras["lap_inside_ball_max"]) == 0.0
    assert max(rep.extras["dt_at_zero_max"]) == 0.0
    assert rep.spread["lap"] <= 2
    # decay at rate delta/R is admissible with a bounded constant
    assert max(rep.extras["admissibility_rate_delta_over_R"]) < 10


# -- zero propagation


def test_zero_psi_confirmed():
    g = random_connected_graph(12, 4, seed=0)
    v = zero_propagation_check(g, np.zeros(g.n), 2.0, 1.0, np.ones(g.n), 1.0)
    assert v.status == "confirmed"
    assert sorted(v.witness) == list(range(g.n))
    assert v.premise_violations == []


def test_path_counterexample():
    g = path_graph(3)
    v = zero_propagation_check(g, np.array([0.0, 0.5, 1.0]), 2.0, 1.0, np.ones(3), 1.0)
    assert v.status == "premise_violated"
    assert v.conflict_vertex == 0
    assert 0 in v.premise_violations


def test_no_zero():
    g = path_graph(4)
    v = zero_propagation_check(g, np.ones(4), 1.0, 1.0, np.ones(4), 1.0)
    assert v.status == "no_zero"
    assert v.premise_violations == []


def test_negative_psi_rejected():
    g = path_graph(3)
    with pytest.raises(ValueError, match="nonnegative"):
        zero_propagation_check(g, np.array([0.0, -1.0, 1.0]), 1.0, 1.0, np.ones(3), 1.0)


def test_disconnected_rejected():
    with pytest.warns(UserWarning):
        g = build_graph(3, [(0, 1, 1.0)], 1.0)
    with pytest.raises(ValueError, match="connected"):
        zero_propagation_check(g, np.zeros(3), 1.0, 1.0, np.ones(3), 1.0)


@given(st.integers(2, 60), st.integers(0, 40), st.integers(0, 10_000))
def test_propagation_agrees_with_premise(n, extra, seed):
    g = random_connected_graph(n, extra, seed=seed)
    rng = np.random.default_rng(seed)
    psi = rng.uniform(0, 1, n) * (rng.uniform(size=n) < 0.7)
    psi[rng.integers(n)] = 0.0
    v = zero_propagation_check(g, psi, 1.5, 1.0, np.ones(n), 10.0)
    if v.status == "confirmed":
        assert np.all(psi == 0)
    else:
        x = v.conflict_vertex
        assert psi[x] == 0 and np.any(psi[g.neighbors(x)] > 0)


def test_underflowing_power_rejected():
    g = path_graph(3)
    with pytest.raises(ValueError, match="underflows"):
        zero_propagation_check(g, np.array([0.0, 1e-300, 1.0]), 2.0, 1.0, np.ones(3), 1.0)


def test_conflict_vertex_fails_premise_independently():
    g = random_connected_graph(30, 10, seed=5)
    psi = np.linspace(0, 1, g.n)
    v = zero_propagation_check(g, psi, 2.0, 1.5, np.ones(g.n), 3.0)
    lhs, rhs, tol = premise_margins(g, psi, 2.0, 1.5, np.ones(g.n), 3.0)
    x = v.conflict_vertex
    assert lhs[x] > rhs[x] + tol[x]
    assert x in v.premise_violations
