"""Test-function families, their smooth profiles, and numerical bound checks."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .calculus import laplacian_apply
from .graph import WeightedGraph
from .metric import PseudoMetric, TruncationError, distance_map

PSI_GRID = 10_000
T_SAMPLES = 400


class ProfileError(ValueError):
    pass


def _smooth(u):
    """Quintic smoothstep S(u) = 10u^3 - 15u^4 + 6u^5 and its two derivatives."""
    u2 = u * u
    return (u2 * u * (10 - 15 * u + 6 * u2),
            30 * u2 * (1 - u) ** 2,
            60 * u - 180 * u2 + 120 * u2 * u)


@dataclass(frozen=True)
class Profile:
    """A C^2 radial profile with analytic first and second derivatives."""

    name: str
    value: Callable
    d1: Callable
    d2: Callable

    def __call__(self, r):
        return self.value(r)


def _piecewise(r, inner, bridge, outer):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    lo = r <= 1
    hi = r >= 2
    mid = ~(lo | hi)
    out[lo] = inner(r[lo])
    out[hi] = outer(r[hi])
    out[mid] = bridge(r[mid] - 1.0)
    return out if out.ndim else float(out)


def _const(c):
    return lambda r: np.full(r.shape, c)


def bump_profile(name: str = "phi") -> Profile:
    """1 on [0,1], 0 on [2,oo), 1 - S(r-1) in between."""
    return Profile(
        name,
        lambda r: _piecewise(r, _const(1.0), lambda u: np.clip(1 - _smooth(u)[0], 0.0, 1.0),
                             _const(0.0)),
        lambda r: _piecewise(r, _const(0.0), lambda u: -_smooth(u)[1], _const(0.0)),
        lambda r: _piecewise(r, _const(0.0), lambda u: -_smooth(u)[2], _const(0.0)),
    )


def psi_coefficients(delta: float) -> np.ndarray:
    """u^3, u^4, u^5 coefficients of the bridge 1 + c3 u^3 + c4 u^4 + c5 u^5 on (1, 2)."""
    e = math.exp(-2 * delta)
    A = np.array([[1.0, 1.0, 1.0], [3.0, 4.0, 5.0], [6.0, 12.0, 20.0]])
    return np.linalg.solve(A, np.array([e - 1, -delta * e, delta * delta * e]))


def psi_profile(delta: float) -> Profile:
    c3, c4, c5 = psi_coefficients(delta)

    def tail(k):
        return lambda r: (-delta) ** k * np.exp(-delta * r)

    return Profile(
        "psi",
        lambda r: _piecewise(r, _const(1.0), lambda u: 1 + u ** 3 * (c3 + u * (c4 + u * c5)), tail(0)),
        lambda r: _piecewise(r, _const(0.0), lambda u: u * u * (3 * c3 + u * (4 * c4 + 5 * c5 * u)),
                             tail(1)),
        lambda r: _piecewise(r, _const(0.0), lambda u: u * (6 * c3 + u * (12 * c4 + 20 * c5 * u)),
                             tail(2)),
    )


@dataclass(frozen=True)
class ProfileSet:
    phi: Profile
    eta: Profile
    psi: Profile
    delta: float
    j: float
    s: float
    C1: float
    C2: float


def _refined_sup(f, grid):
    """Grid maximum of f, polished by a bounded search between the neighbours of the argmax."""
    vals = f(grid)
    k = int(vals.argmax())
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi <= lo:
        return float(vals[k])
    res = minimize_scalar(lambda x: -float(f(np.float64(x))), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(max(vals[k], -res.fun))


def make_profiles(delta: float, j: float, s: float) -> ProfileSet:
    """Build phi, eta, psi and the envelope constants C2 e^{-delta r} <= psi <= C1 e^{-delta r}.

    C1 also dominates |psi'| and |psi''| against e^{-delta r} on [-j, oo).
    """
    if delta <= 0:
        raise ProfileError("delta must be positive")
    if j < 0:
        raise ProfileError("jump size must be nonnegative")
    if s <= 1:
        raise ProfileError("s must exceed 1")
    psi = psi_profile(delta)
    grid = np.linspace(1.0, 2.0, PSI_GRID)
    slope = psi.d1(grid)
    bad = np.flatnonzero(slope > 0)
    if bad.size:
        raise ProfileError(f"psi is increasing at r = {grid[bad[0]]:.6g} for delta = {delta:g}")
    if np.any(psi.value(grid) <= 0):
        raise ProfileError(f"psi is not positive on (1, 2) for delta = {delta:g}")
    r = np.concatenate([np.linspace(-j, 1.0, 64), grid])
    w = np.exp(delta * r)
    ratio = psi.value(r) * w
    # on [2, oo) psi e^{delta r} = 1, |psi'| e^{delta r} = delta, |psi''| e^{delta r} = delta^2
    C1 = max(_refined_sup(lambda x, f=f: np.abs(f(x)) * np.exp(delta * x), r)
             for f in (psi.value, psi.d1, psi.d2))
    C1 = float(max(C1, 1.0, delta, delta * delta))
    C2 = float(min(ratio.min(), 1.0))
    return ProfileSet(bump_profile("phi"), bump_profile("eta"), psi, float(delta), float(j),
                      float(s), C1, C2)


def default_s(sigma: float) -> int:
    return math.ceil(2 * sigma / (sigma - 1)) + 1


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    """phi_R(x, t) on a graph for one radius R; ``at(R)`` rescales."""

    family: str
    graph: WeightedGraph
    metric: PseudoMetric
    profiles: ProfileSet
    R: float
    alpha: float
    s: float
    theta1: float = 4.0
    theta2: float = 4.0
    delta: Optional[float] = None
    R0: float = 1.0

    def __post_init__(self):
        if self.family == "compact":
            t1, t2 = self.theta1, self.theta2
            if t1 < 2 or t2 < 2 or t1 / t2 < (1 + self.alpha) / 2 - 1e-15:
                raise ValueError("need theta1, theta2 >= 2 and theta1/theta2 >= (1+alpha)/2")
        elif self.family == "exponential":
            if self.R < max(self.R0, 2 * self.profiles.j):
                raise ValueError(
                    f"exponential family needs R >= max(R0, 2j) = {max(self.R0, 2 * self.profiles.j):g}"
                )
        else:
            raise ValueError(f"unknown cutoff family {self.family!r}")
        if self.R <= 0:
            raise ValueError("R must be positive")

    def at(self, R: float) -> "CutoffFamily":
        return replace(self, R=float(R))

    @property
    def a(self) -> float:
        return (1 + self.alpha) / 2

    @property
    def time_support(self) -> float:
        if self.family == "compact":
            return 2 ** (1 / self.theta2) * self.R ** (self.theta1 / self.theta2)
        return 2 * self.R ** self.a

    @property
    def spatial_support(self) -> float:
        return 2 ** (1 / self.theta1) * self.R if self.family == "compact" else math.inf

    def time_breakpoints(self) -> np.ndarray:
        """Times where some vertex's phi_R(x, .) leaves C^3 (profile junctions)."""
        if self.family == "exponential":
            return np.array([1.0, 2.0]) * self.R ** self.a
        q = np.unique(self.metric.power(self.theta1))
        out = [(k * self.R ** self.theta1 - q[q < k * self.R ** self.theta1]) ** (1 / self.theta2)
               for k in (1, 2)]
        return np.unique(np.concatenate(out))

    # -- compact family pieces
    def level(self, t) -> np.ndarray:
        """(t^theta2 + d^theta1) / R^theta1."""
        return (t ** self.theta2 + self.metric.power(self.theta1)) / self.R ** self.theta1

    def in_E(self, t) -> np.ndarray:
        lv = self.level(t)
        return (lv >= 1) & (lv <= 2)

    def in_F(self, t) -> np.ndarray:
        q = t ** self.theta2 + self.metric.power(self.theta1)
        return (q >= (self.R / 2) ** self.theta1) & (q <= (4 * self.R) ** self.theta1)

    def in_Q(self, t) -> np.ndarray:
        inside = self.metric.dist <= self.spatial_support
        return inside & (t <= self.time_support)

    # -- exponential family pieces
    def spatial(self) -> np.ndarray:
        return self.profiles.psi.value((self.metric.dist - self.profiles.j) / self.R)

    def _eta(self, t, k=0):
        e = self.profiles.eta
        tau = t / self.R ** self.a
        return (e.value, e.d1, e.d2)[k](np.asarray(tau, dtype=float))

    # -- evaluators
    def value(self, t: float) -> np.ndarray:
        if self.family == "compact":
            return self.profiles.phi.value(self.level(t))
        return self._eta(t) ** self.s * self.spatial()

    def dt(self, t: float) -> np.ndarray:
        if self.family == "compact":
            ph = self.profiles.phi
            return ph.d1(self.level(t)) * self.theta2 * t ** (self.theta2 - 1) / self.R ** self.theta1
        s, ra = self.s, self.R ** self.a
        return s * self._eta(t) ** (s - 1) * self._eta(t, 1) / ra * self.spatial()

    def dtt(self, t: float) -> np.ndarray:
        if self.family == "compact":
            ph, t1, t2 = self.profiles.phi, self.theta1, self.theta2
            lv = self.level(t)
            g1 = t2 * t ** (t2 - 1) / self.R ** t1
            g2 = t2 * (t2 - 1) * t ** (t2 - 2) / self.R ** t1
            return ph.d2(lv) * g1 * g1 + ph.d1(lv) * g2
        s, ra = self.s, self.R ** self.a
        e0, e1, e2 = self._eta(t), self._eta(t, 1), self._eta(t, 2)
        inner = s * (s - 1) * e0 ** (s - 2) * e1 * e1 + s * e0 ** (s - 1) * e2 if s != 1 else e2
        return inner / (ra * ra) * self.spatial()

    def laplacian(self, t: float) -> np.ndarray:
        """Delta phi_R(., t); the exponential family factors eta^s out of the spatial sum."""
        if self.family == "compact":
            return laplacian_apply(self.graph, self.value(t))
        return self._eta(t) ** self.s * laplacian_apply(self.graph, self.spatial())


def cutoff_family(g: WeightedGraph, d: PseudoMetric, family: str, R: float, *, alpha: float,
                  sigma: Optional[float] = None, s: Optional[float] = None,
                  theta1: Optional[float] = None, theta2: Optional[float] = None,
                  delta: Optional[float] = None, R0: float = 1.0,
                  x0: Optional[int] = None) -> CutoffFamily:
    if x0 is not None and x0 != d.x0:
        d = distance_map(g, d.kind, x0, table=d.table)
    if s is None:
        if sigma is None:
            raise ValueError("give s or sigma")
        s = default_s(sigma)
    elif sigma is not None and s <= 2 * sigma / (sigma - 1):
        raise ValueError("s must exceed 2 sigma/(sigma - 1)")
    if family == "exponential" and delta is None:
        raise ValueError("exponential family needs delta")
    profiles = make_profiles(delta if delta is not None else 1.0, d.jump, s)
    return CutoffFamily(
        family, g, d, profiles, float(R), float(alpha), float(s),
        2 * (1 + alpha) if theta1 is None else float(theta1),
        4.0 if theta2 is None else float(theta2),
        delta, float(R0),
    )


@dataclass
class BoundReport:
    family: str
    R_grid: list
    constants: dict
    violations: dict
    spread: dict
    extras: dict = field(default_factory=dict)
    spread_limit: float = 2.0

    @property
    def indicator_clean(self) -> bool:
        return all(sum(v) == 0 for v in self.violations.values())

    @property
    def uniform(self) -> bool:
        return all(sp <= self.spread_limit for sp in self.spread.values())

    @property
    def passed(self) -> bool:
        return self.indicator_clean and self.uniform

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _spread(values) -> float:
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return 1.0
    if np.any(v <= 0):
        return math.inf
    return float(v.max() / v.min())


def time_samples(fam: CutoffFamily, n: int = T_SAMPLES) -> np.ndarray:
    """Uniform grid over the time support plus a few times past it."""
    T = fam.time_support
    return np.concatenate([np.linspace(0.0, T, n), T * np.array([1.01, 1.25, 2.0])])


def verify_cutoff_bounds(fam: CutoffFamily, R_grid: Sequence[float],
                         n_t: int = T_SAMPLES) -> BoundReport:
    """Empirical constants of the derivative and Laplacian envelopes for each R."""
    R_grid = [float(r) for r in R_grid]
    d = fam.metric
    interior = ~fam.graph.boundary
    names = (("lap", "lap_power", "dt", "dtt") if fam.family == "compact"
             else ("dt", "dtt", "lap"))
    consts = {k: [] for k in names}
    viol = {k: [] for k in names}
    extras: dict = {}
    if fam.family == "compact":
        need = 4 * max(R_grid) + d.jump
        if need > d.faithful_radius:
            raise TruncationError(f"F_R needs a window of radius {need:g}; have {d.faithful_radius:g}")
        extras.update(support_escapes=[], convexity_violations=[])
        for R in R_grid:
            f = fam.at(R)
            c = dict.fromkeys(names, 0.0)
            v = dict.fromkeys(names, 0)
            escapes = conv = 0
            s = f.s
            for t in time_samples(f, n_t):
                val = f.value(t)
                lap = f.laplacian(t)
                E, F, Q = f.in_E(t), f.in_F(t), f.in_Q(t)
                escapes += int(np.sum((val != 0) & ~Q))
                neg = np.maximum(-lap, 0.0)[interior]
                c["lap"] = max(c["lap"], float(neg.max()) * R ** (1 + f.alpha))
                v["lap"] += int(np.sum((neg > 0) & ~F[interior]))
                vs = val ** s
                lap_s = laplacian_apply(f.graph, vs)
                lin = -s * val ** (s - 1) * lap
                conv += int(np.sum((-lap_s > lin + 1e-12 * (np.abs(lin) + vs))[interior]))
                pos = interior & (val > 0)
                if pos.any():
                    c["lap_power"] = max(c["lap_power"], float(
                        np.max(np.maximum(-lap_s, 0.0)[pos] / (s * val[pos] ** (s - 1)))
                    ) * R ** (1 + f.alpha))
                v["lap_power"] += int(np.sum((np.maximum(-lap_s, 0.0) > 0)[interior] & ~F[interior]))
                q1 = f.dt(t)
                c["dt"] = max(c["dt"], float(np.abs(q1).max()) * R ** (f.theta1 / f.theta2))
                v["dt"] += int(np.sum((q1 != 0) & ~E))
                q2 = f.dtt(t)
                c["dtt"] = max(c["dtt"], float(np.maximum(q2, 0).max()) * R ** (2 * f.theta1 / f.theta2))
                v["dtt"] += int(np.sum((q2 != 0) & ~E))
            for k in names:
                consts[k].append(c[k])
                viol[k].append(v[k])
            extras["support_escapes"].append(escapes)
            extras["convexity_violations"].append(conv)
    else:
        extras.update(lap_inside_ball_max=[], dt_at_zero_max=[], weighted_lap_sup=[],
                      admissibility_rate_delta_over_R=[], admissibility_rate_delta=[])
        for R in R_grid:
            f = fam.at(R)
            a, s, delta = f.a, f.s, f.delta
            outside = d.dist > R
            wexp = np.exp(delta * d.dist / R)
            c = dict.fromkeys(names, 0.0)
            v = dict.fromkeys(names, 0)
            inside_max = 0.0
            wsup = 0.0
            adm_R = adm_1 = 0.0
            decay_1 = np.exp(-delta * d.dist)
            for t in time_samples(f, n_t):
                e0 = float(f._eta(t))
                lap = f.laplacian(t)
                inside_max = max(inside_max, float(np.abs(lap[interior & ~outside]).max(initial=0.0)))
                v["lap"] += int(np.sum((lap != 0) & interior & ~outside))
                if e0 > 0:
                    r = np.abs(lap[interior]) * R ** (1 + f.alpha) * wexp[interior] / e0 ** s
                    wsup = max(wsup, float(r.max()))
                    c["lap"] = wsup
                in_q = R ** a <= t <= 2 * R ** a
                q1 = f.dt(t)
                q2 = f.dtt(t)
                if e0 > 0:
                    c["dt"] = max(c["dt"], float(np.max(np.abs(q1) * wexp)) * R ** a / e0 ** (s - 1))
                    if s >= 2:
                        c["dtt"] = max(c["dtt"], float(np.max(np.abs(q2) * wexp)) * R ** (2 * a)
                                       / e0 ** (s - 2))
                if not in_q:
                    v["dt"] += int(np.sum(q1 != 0))
                    v["dtt"] += int(np.sum(q2 != 0))
                env = np.maximum.reduce([f.value(t), np.abs(q1), np.abs(q2)])
                adm_R = max(adm_R, float(np.max(env * wexp)))
                adm_1 = max(adm_1, float(np.max(env / decay_1)))
            for k in names:
                consts[k].append(c[k])
                viol[k].append(v[k])
            extras["lap_inside_ball_max"].append(inside_max)
            extras["dt_at_zero_max"].append(float(np.abs(f.dt(0.0)).max()))
            extras["weighted_lap_sup"].append(wsup)
            extras["admissibility_rate_delta_over_R"].append(adm_R)
            extras["admissibility_rate_delta"].append(adm_1)
    spread = {k: _spread(vals) for k, vals in consts.items()}
    return BoundReport(fam.family, R_grid, consts, viol, spread, extras)


# -- zero propagation ------------------------------------------------------------------

@dataclass
class PropagationVerdict:
    status: str  # "confirmed", "premise_violated", "no_zero"
    premise_violations: list
    witness: list
    conflict_vertex: Optional[int] = None
    start: Optional[int] = None

    @property
    def identically_zero(self) -> bool:
        return self.status == "confirmed"

    def to_dict(self) -> dict:
        return asdict(self)


def premise_margins(g: WeightedGraph, psi, gamma: float, beta: float, F, C: float):
    """Per-vertex |Delta psi^gamma| and C psi^beta F with a rounding allowance."""
    psi = np.asarray(psi, dtype=float)
    pg = psi ** gamma
    lhs = np.abs(laplacian_apply(g, pg))
    rhs = C * psi ** beta * np.asarray(F, dtype=float)
    scale = (g.adjacency @ pg + g.degree_weight * pg) / g.mu
    return lhs, rhs, 1e-12 * (scale + rhs)


def zero_propagation_check(g: WeightedGraph, psi, gamma: float, beta: float, F,
                           C: float) -> PropagationVerdict:
    """Check the premise |Delta psi^gamma| <= C psi^beta F and propagate a zero of psi.

    The propagation is the combinatorial argument itself: at a zero x of psi
    the premise forces sum_y omega(x,y) psi(y)^gamma = 0, hence psi(y) = 0 for
    every neighbour.  A neighbour with psi(y) > 0 certifies that the premise
    fails at x.
    """
    psi = np.asarray(psi, dtype=float)
    F = np.broadcast_to(np.asarray(F, dtype=float), psi.shape)
    if np.any(psi < 0) or not np.all(np.isfinite(psi)):
        raise ValueError("psi must be finite and nonnegative")
    if np.any(F < 0):
        raise ValueError("F must be nonnegative")
    if gamma <= 0 or beta <= 0 or C <= 0:
        raise ValueError("gamma, beta and C must be positive")
    if not g.connected:
        raise ValueError("zero propagation needs a connected graph")
    tiny = np.flatnonzero((psi > 0) & (psi ** gamma == 0))
    if tiny.size:
        raise ValueError(f"psi^gamma underflows at vertex {int(tiny[0])}; rescale psi")
    lhs, rhs, tol = premise_margins(g, psi, gamma, beta, F, C)
    failing = np.flatnonzero(lhs > rhs + tol).tolist()
    zeros = np.flatnonzero(psi == 0)
    if zeros.size == 0:
        return PropagationVerdict("no_zero", failing, [])
    x1 = int(zeros[0])
    seen = np.zeros(g.n, dtype=bool)
    seen[x1] = True
    order = [x1]
    queue = deque([x1])
    adj = g.adjacency
    while queue:
        x = queue.popleft()
        nbrs = adj.indices[adj.indptr[x]:adj.indptr[x + 1]]
        wts = adj.data[adj.indptr[x]:adj.indptr[x + 1]]
        live = nbrs[(wts > 0) & (psi[nbrs] > 0)]
        if live.size:
            return PropagationVerdict("premise_violated", failing, order, x, x1)
        for y in nbrs:
            if not seen[y]:
                seen[y] = True
                order.append(int(y))
                queue.append(int(y))
    if failing:
        # psi vanishes identically, so the premise holds trivially; cannot happen
        return PropagationVerdict("premise_violated", failing, order, failing[0], x1)
    return PropagationVerdict("confirmed", [], order, None, x1)
