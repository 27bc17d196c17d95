import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphwave.conditions import (Potential, fit_growth, growth_check, initial_data_report,
                                  potential_from_tag, radial_chain, radial_increments,
                                  sphere_volumes, target_exponent, time_integral, xdelta_norm)
from graphwave.cutoff import cutoff_family
from graphwave.graph import homogeneous_tree, lattice_zn, path_graph, random_connected_graph
from graphwave.metric import TruncationError, distance_map


@pytest.fixture(scope="module")
def line():
    g = lattice_zn(1, 120)
    return g, distance_map(g, "euclidean")


def test_potential_one():
    v = Potential.one()
    assert v(np.arange(4), 1.0).tolist() == [1, 1, 1, 1]
    assert v.inverse_power(np.arange(3), 0.0, 2.5).tolist() == [1, 1, 1]


def test_potential_rejects_nonpositive():
    v = Potential(lambda x, t: np.where(x == 2, 0.0, 1.0))
    with pytest.raises(ValueError, match="positive"):
        v(np.arange(3))
    with pytest.raises(ValueError):
        Potential.from_table([1.0, -1.0])


def test_tree_exponential_inverse_power_without_overflow():
    g = homogeneous_tree(2, 10)
    d = distance_map(g)
    v = potential_from_tag("tree_exponential", d, 3.0, c=2.0)
    ip = v.inverse_power(np.arange(g.n), 0.0, 3.0)
    k = d.dist
    expected = (2.0 * np.maximum(k, 1) ** 0 * 2.0 ** (2 * k)) ** -0.5
    assert np.allclose(ip, expected, rtol=1e-12)


def test_lower_bound_spot_check():
    g = lattice_zn(1, 10)
    low = Potential.one()
    v = Potential(lambda x, t: 1.0 + np.sin(t) ** 2 + 0 * x, time_independent=False, lower=low)
    assert v.lower_bound_violations(g.n) == 0
    bad = Potential(lambda x, t: 0.5 + 0 * x + 0 * t, time_independent=False, lower=low)
    assert bad.lower_bound_violations(g.n) > 0


def test_unknown_tag():
    g = path_graph(3)
    with pytest.raises(ValueError):
        potential_from_tag("cubic", distance_map(g), 2.0)


@pytest.mark.parametrize("cid, sigma, alpha, p", [
    ("ER_spacetime", 2.0, 1.0, 4.0),
    ("ball_volume", 2.0, 1.0, 3.0),
    ("ball_g_weighted", 3.0, 0.0, 1.0),
    ("annulus", 2.0, 1.0, 2.0),
    ("exp_inside", 3.0, 1.0, 3.0),
    ("finite_time_slab", 2.0, 0.0, 4.0),
])
def test_target_exponents(cid, sigma, alpha, p):
    assert target_exponent(cid, sigma, alpha) == pytest.approx(p)


def test_ball_volume_on_line(line):
    g, d = line
    R = [4, 8, 16, 32, 64]
    v = growth_check(g, d, Potential.one(), 2.0, 1.0, "ball_volume", R)
    assert v.lhs_values == [2 * (2 * r + 1) for r in R]
    assert v.target_exponent == 3.0
    assert v.holds
    assert v.sup_ratio == pytest.approx(max(2 * (2 * r + 1) / r ** 3 for r in R))


def test_ball_volume_needs_v_one(line):
    g, d = line
    v = potential_from_tag("lattice_power", d, 2.0, p=1.0)
    with pytest.raises(ValueError, match="v = 1"):
        growth_check(g, d, v, 2.0, 1.0, "ball_volume", [2, 3, 4, 5, 6])


def test_finite_slab_equals_R_times_volume():
    g = random_connected_graph(10, 4, seed=2)
    d = distance_map(g)
    R = [1.5, 3, 6, 12, 24]
    v = growth_check(g, d, Potential.one(), 2.0, 0.0, "finite_time_slab", R)
    assert np.allclose(v.lhs_values, np.array(R) * g.mu.sum(), rtol=1e-14)
    assert v.fitted_slope == pytest.approx(1.0)
    assert v.holds


def test_finite_slab_rejects_windows(line):
    g, d = line
    with pytest.raises(ValueError, match="finite"):
        growth_check(g, d, Potential.one(), 2.0, 0.0, "finite_time_slab", [2, 3, 4, 5, 6])


def test_ER_spacetime_v_one_matches_exact_interval_lengths(line):
    g, d = line
    R = [3, 5, 8, 12, 20]
    v = growth_check(g, d, Potential.one(), 2.0, 1.0, "ER_spacetime", R)
    for r, lhs in zip(R, v.lhs_values):
        x = d.dist
        lo = np.maximum(r ** 4 - x ** 4, 0) ** 0.25
        hi = np.maximum(2 * r ** 4 - x ** 4, 0) ** 0.25
        assert lhs == pytest.approx(float(np.sum((hi - lo) * g.mu)), rel=1e-12)
    # exact t-length of E_R at fixed x is ~ R, summed over ~ R vertices: slope ~ 2 <= 4
    assert v.fitted_slope == pytest.approx(2.0, abs=0.1)
    assert v.holds


def test_ER_spacetime_quadrature_refines(line):
    g, d = line
    v = Potential(lambda x, t: 1.0 + 0.5 * np.sin(t + x) ** 2, time_independent=False)
    R = [3, 5, 8, 12, 20]
    coarse = growth_check(g, d, v, 2.0, 1.0, "ER_spacetime", R)
    fine = growth_check(g, d, v, 2.0, 1.0, "ER_spacetime", R, dt_quad=R[0] / 2000)
    rel = np.abs(np.array(coarse.lhs_values) - fine.lhs_values) / np.array(fine.lhs_values)
    assert rel.max() < 0.01


def test_ER_spacetime_window(line):
    g, d = line
    with pytest.raises(TruncationError):
        growth_check(g, d, Potential.one(), 2.0, 1.0, "ER_spacetime", [20, 40, 60, 80, 110])


@pytest.mark.parametrize("theta1, theta2", [(1.5, 4.0), (4.0, 1.0), (2.0, 8.0)])
def test_theta_constraints(line, theta1, theta2):
    g, d = line
    with pytest.raises(ValueError, match="theta"):
        growth_check(g, d, Potential.one(), 2.0, 1.0, "ER_spacetime", [2, 3, 4, 5, 6],
                     theta1=theta1, theta2=theta2)


@pytest.mark.parametrize("sigma, R", [(1.0, [2, 3, 4, 5, 6]), (2.0, [2, 3, 4, 5]),
                                      (2.0, [2, 3, 3, 5, 6]), (2.0, [1.0, 2, 3, 4, 5])])
def test_parameter_errors(line, sigma, R):
    g, d = line
    with pytest.raises(ValueError):
        growth_check(g, d, Potential.one(), sigma, 1.0, "ball_volume", R)


def test_exp_conditions_on_line(line):
    g, d = line
    R = [2, 3, 4, 6, 8]
    inside = growth_check(g, d, Potential.one(), 2.0, 1.0, "exp_inside", R, delta=0.5)
    outside = growth_check(g, d, Potential.one(), 2.0, 1.0, "exp_outside", R, delta=0.5)
    # time interval length R^a, a = 1; spatial sum ~ R
    assert inside.fitted_slope == pytest.approx(2.0, abs=0.15)
    assert inside.holds and outside.holds
    with pytest.raises(ValueError, match="delta"):
        growth_check(g, d, Potential.one(), 2.0, 1.0, "exp_inside", R)


def test_exp_inside_matches_direct_sum(line):
    g, d = line
    R = [2, 3, 4, 6, 8]
    v = growth_check(g, d, Potential.one(), 3.0, 0.0, "exp_inside", R, delta=0.7)
    for r, lhs in zip(R, v.lhs_values):
        sel = d.dist <= r
        expected = r ** 0.5 * np.sum(np.exp(-0.7 * d.dist[sel] / r) * g.mu[sel])
        assert lhs == pytest.approx(expected, rel=1e-12)


def test_ball_g_weighted_tree_chain():
    g = homogeneous_tree(2, 16)
    d = distance_map(g)
    sigma = 2.0
    v = potential_from_tag("tree_exponential", d, sigma)
    R = [2, 3, 5, 8, 12]
    out = growth_check(g, d, v, sigma, 0.0, "ball_g_weighted", R)
    for r, lhs in zip(R, out.lhs_values):
        k = np.arange(int(r) + 1)
        assert lhs == pytest.approx(np.sum(np.maximum(k, 1.0) ** 0.5), rel=1e-12)
    assert out.holds


def test_annulus_on_plane():
    g = lattice_zn(2, 60)
    d = distance_map(g, "euclidean")
    R = [5, 10, 20, 30, 45]
    v = growth_check(g, d, Potential.one(), 2.0, 1.0, "annulus", R)
    assert v.target_exponent == 2.0
    assert v.fitted_slope == pytest.approx(1.0, abs=0.15)


def test_fit_growth_power_law():
    R = np.array([2.0, 4, 8, 16, 32])
    v = fit_growth("x", R, 3 * R ** 1.5, 1.5)
    assert v.fitted_slope == pytest.approx(1.5)
    assert v.sup_ratio == pytest.approx(3.0)
    assert v.holds
    assert not fit_growth("x", R, R ** 1.6, 1.5).holds


@given(st.floats(0.1, 3), st.floats(0.1, 10))
def test_fit_growth_recovers_exponent(p, c):
    R = np.geomspace(2, 50, 6)
    v = fit_growth("x", R, c * R ** p, p)
    assert v.fitted_slope == pytest.approx(p, abs=1e-9)


def test_time_integral_trapezoid():
    v = Potential(lambda x, t: (1.0 + t) ** 2 + 0 * x, time_independent=False)
    # v^{-1} = (1+t)^{-2}, integral over [0, 1] = 1/2
    val = time_integral(v, np.array([0]), 0.0, 1.0, 2.0, 1e-3)
    assert val[0] == pytest.approx(0.5, rel=1e-6)


# -- X_delta


def test_xdelta_zero(line):
    g, d = line
    r = xdelta_norm(g, d, 1.0, np.zeros(g.n))
    assert r.value == 0 and r.converged and all(s == 0 for s in r.partial_sums)


def test_xdelta_line_geometric_oracle(line):
    g, d = line
    r = xdelta_norm(g, d, 1.0, np.ones(g.n))
    assert r.value == pytest.approx(2 + 4 / (math.e - 1), rel=1e-12)
    assert r.converged and r.monotone


def test_xdelta_tree_diverges():
    g = homogeneous_tree(3, 9)
    d = distance_map(g)
    r = xdelta_norm(g, d, 0.5, np.ones(g.n))
    assert not r.converged
    inc = np.diff(r.partial_sums)
    assert np.allclose(inc[1:] / inc[:-1], 3 * math.exp(-0.5), rtol=1e-12)


def test_xdelta_explicit_radii(line):
    g, d = line
    r = xdelta_norm(g, d, 1.0, np.ones(g.n), radii=[0, 1, 2.5])
    assert r.partial_sums == pytest.approx([2, 2 + 4 / math.e, 2 + 4 / math.e + 4 / math.e ** 2])


@given(st.lists(st.floats(-5, 5), min_size=61, max_size=61), st.floats(0.1, 2))
def test_xdelta_partial_sums_nondecreasing(vals, delta):
    g = lattice_zn(1, 30)
    d = distance_map(g, "euclidean")
    r = xdelta_norm(g, d, delta, np.array(vals))
    assert np.all(np.diff(r.partial_sums) >= 0)


def test_radial_increments_shells(line):
    g, d = line
    k, inc = radial_increments(d, g.mu)
    assert inc[0] == 2 and np.all(inc[1:] == 4)
    assert k[-1] == 120


# -- initial data


def test_initial_data_nonnegative():
    g = lattice_zn(1, 30)
    d = distance_map(g, "euclidean")
    rep = initial_data_report(g, d, np.abs(np.sin(np.arange(g.n))), [2, 4, 8])
    assert all(s >= 0 for s in rep.S_values)
    assert rep.total_nonnegative and rep.liminf_nonnegative


def test_initial_data_negative_spike():
    g = lattice_zn(1, 30)
    d = distance_map(g, "euclidean")
    u1 = np.zeros(g.n)
    u1[g.x0] = -1
    rep = initial_data_report(g, d, u1, [2, 4, 8])
    assert rep.total == -2.0
    assert not rep.total_nonnegative


def test_initial_data_direct_sums():
    g = lattice_zn(1, 30)
    d = distance_map(g, "euclidean")
    u1 = np.zeros(g.n)
    u1[g.x0] = 1.0
    u1[d.dist == 8] = -0.01
    rep = initial_data_report(g, d, u1, [2, 4, 8])
    # mu = 2: S(2) = 2, S(4) = 2 - 2*2*0.01, S(8) = 2 - 0.04
    assert rep.S_values == pytest.approx([2.0, 1.96, 1.96], abs=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_initial_data_brute_force(seed):
    g = random_connected_graph(200, 120, seed=seed)
    d = distance_map(g)
    u1 = np.random.default_rng(seed).normal(size=g.n)
    R = [1, 2, 3]
    rep = initial_data_report(g, d, u1, R)
    for r, s in zip(R, rep.S_values):
        pos = sum(max(u1[x], 0) * g.mu[x] for x in range(g.n) if d.dist[x] <= r)
        neg = sum(max(-u1[x], 0) * g.mu[x] for x in range(g.n) if d.dist[x] <= 2 * r)
        assert s == pytest.approx(pos - neg, rel=1e-12, abs=1e-12)


def test_initial_data_window():
    g = lattice_zn(1, 10)
    d = distance_map(g, "euclidean")
    with pytest.raises(TruncationError):
        initial_data_report(g, d, np.ones(g.n), [2, 6])


# -- radial chain


@pytest.mark.parametrize("N, depth", [(2, 10), (3, 7)])
def test_sphere_volumes(N, depth):
    g = homogeneous_tree(N, depth)
    assert sphere_volumes(g, distance_map(g)).tolist() == [N ** k for k in range(depth + 1)]


def test_radial_chain_matches_graph_sum():
    g = homogeneous_tree(2, 14)
    d = distance_map(g)
    sigma = 3.0
    v = potential_from_tag("tree_exponential", d, sigma)
    R = [2, 3, 4, 6, 8]
    direct = growth_check(g, d, v, sigma, 0.0, "ball_g_weighted", R, delta=0.5).lhs_values
    chain = radial_chain(lambda k: 2.0 ** k,
                         lambda k, r: np.exp(-(np.log(np.maximum(k, 1.0)) * 0
                                               + 2 * k * np.log(2.0)) / 2) * np.exp(-0.5 * k / r),
                         R, 14)
    assert np.allclose(direct, chain, rtol=1e-12)


def test_E_R_inside_Q_R():
    g = lattice_zn(1, 60)
    d = distance_map(g, "euclidean")
    fam = cutoff_family(g, d, "compact", 10, alpha=1.0, sigma=2.0)
    for t in np.linspace(0, 15, 61):
        assert not np.any(fam.in_E(t) & ~fam.in_Q(t))
