"""Finite-radius checks of the nonexistence hypotheses.

Every "<= C R^p for all R >= R0" condition is turned into a falsifiable
finite-sample statement: the log-log slope of the left-hand side over a
geometric R-grid must not exceed p by more than ``slope_tol``, and
sup lhs/R^p is reported as the empirical constant.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .graph import WeightedGraph
from .metric import PseudoMetric, TruncationError, distance_map, require_window

CONDITIONS = (
    "ER_spacetime",
    "ball_g_weighted",
    "ball_volume",
    "exp_inside",
    "exp_outside",
    "annulus",
    "finite_time_slab",
)
DEFAULT_SLOPE_TOL = 0.05


@dataclass(frozen=True, eq=False)
class Potential:
    """Positive coefficient v(x, t) of the nonlinearity.

    ``func(x, t)`` takes an index array and a scalar or matching array of
    times.  ``log_func`` is an optional log v used to evaluate
    v^(-1/(sigma-1)) without overflow.  ``lower`` is a time-independent
    lower bound g(x) <= v(x, t) when one is known.
    """

    func: Callable
    time_independent: bool = True
    identically_one: bool = False
    log_func: Optional[Callable] = None
    lower: Optional["Potential"] = None
    name: str = "custom"

    @classmethod
    def one(cls) -> "Potential":
        return cls(lambda x, t: np.ones(np.shape(x)), identically_one=True, name="one")

    @classmethod
    def from_table(cls, values, name: str = "table") -> "Potential":
        vals = np.asarray(values, dtype=float)
        if np.any(vals <= 0):
            raise ValueError("potential values must be positive")
        vals = vals.copy()
        vals.setflags(write=False)
        return cls(lambda x, t: vals[x], log_func=lambda x, t: np.log(vals[x]), name=name)

    def __call__(self, x, t=0.0) -> np.ndarray:
        out = np.asarray(self.func(np.asarray(x), t), dtype=float)
        if np.any(~(out > 0)):
            raise ValueError(f"potential {self.name} is not positive at every evaluated point")
        return out

    def inverse_power(self, x, t, sigma: float) -> np.ndarray:
        """v(x, t)^(-1/(sigma - 1))."""
        x = np.asarray(x)
        if self.identically_one:
            return np.ones(x.shape)
        if self.log_func is not None:
            return np.exp(-np.asarray(self.log_func(x, t), dtype=float) / (sigma - 1))
        return self(x, t) ** (-1.0 / (sigma - 1))

    def spatial_lower(self) -> "Potential":
        if self.lower is not None:
            return self.lower
        if self.time_independent:
            return self
        raise ValueError("time-dependent potential without a lower bound g(x)")

    def lower_bound_violations(self, n: int, t_max: float = 10.0, samples: int = 1000,
                               seed: int = 0) -> int:
        """Random spot check of v(x, t) >= g(x)."""
        if self.lower is None:
            return 0
        rng = np.random.default_rng(seed)
        x = rng.integers(0, n, size=samples)
        t = rng.uniform(0.0, t_max, size=samples)
        return int(np.sum(self(x, t) < self.lower(x, 0.0)))


def potential_from_tag(tag: str, d: PseudoMetric, sigma: float, **params) -> Potential:
    """Closed registry of formula potentials.

    ``lattice_power``: v = c (1 + d)^p.
    ``tree_exponential``: v = g = c max(d, 1)^((sigma-3)/2) N^((sigma-1) d).
    """
    dist = d.dist
    c = float(params.get("c", 1.0))
    if c <= 0:
        raise ValueError("potential constant c must be positive")
    if tag == "lattice_power":
        p = float(params.get("p", 0.0))
        logv = math.log(c) + p * np.log1p(dist)
    elif tag == "tree_exponential":
        N = float(params.get("N", d.graph.params.get("N", 2)))
        logv = (math.log(c) + 0.5 * (sigma - 3) * np.log(np.maximum(dist, 1.0))
                + (sigma - 1) * dist * math.log(N))
    else:
        raise ValueError(f"unknown potential tag {tag!r}")
    logv.setflags(write=False)
    return Potential(lambda x, t: np.exp(logv[x]), log_func=lambda x, t: logv[x], name=tag)


@dataclass
class GrowthVerdict:
    condition_id: str
    R_grid: list
    lhs_values: list
    target_exponent: float
    fitted_slope: float
    sup_ratio: float
    slope_tol: float = DEFAULT_SLOPE_TOL
    notes: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return bool(self.fitted_slope <= self.target_exponent + self.slope_tol)

    @property
    def holds_with_constant(self) -> float:
        return self.sup_ratio

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holds"] = self.holds
        return out


def fit_growth(condition_id: str, R_grid, lhs, target: float,
               slope_tol: float = DEFAULT_SLOPE_TOL, min_points: int = 5) -> GrowthVerdict:
    """Least-squares log-log slope and sup lhs/R^target."""
    R = np.asarray(R_grid, dtype=float)
    y = np.asarray(lhs, dtype=float)
    if R.size < min_points:
        raise ValueError(f"R-grid needs at least {min_points} points")
    if np.any(np.diff(R) <= 0):
        raise ValueError("R-grid must be strictly increasing")
    if np.any(y < 0):
        raise ValueError("left-hand sides must be nonnegative")
    notes = []
    pos = y > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(R[pos]), np.log(y[pos]), 1)[0])
    else:
        slope = 0.0
        notes.append("fewer than two positive values; slope set to 0")
    if not pos.all() and pos.any():
        notes.append("zero values excluded from the slope fit")
    sup_ratio = float(np.max(y / R ** target))
    return GrowthVerdict(condition_id, R.tolist(), y.tolist(), float(target), slope, sup_ratio,
                         slope_tol, notes)


def target_exponent(condition_id: str, sigma: float, alpha: float) -> float:
    if condition_id in ("ER_spacetime", "exp_inside", "exp_outside"):
        return (1 + alpha) * sigma / (sigma - 1)
    if condition_id in ("ball_g_weighted", "ball_volume"):
        return (1 + alpha) * (sigma + 1) / (2 * (sigma - 1))
    if condition_id == "annulus":
        return (1 + alpha) * (sigma + 1) / (2 * (sigma - 1)) - 1
    if condition_id == "finite_time_slab":
        return 2 * sigma / (sigma - 1)
    raise ValueError(f"unknown condition {condition_id!r}")


def time_integral(v: Potential, x, t_lo, t_hi, sigma: float, dt: float) -> np.ndarray:
    """Per-vertex trapezoid integral of v^(-1/(sigma-1)) over [t_lo, t_hi].

    Every vertex's interval is split into the same number of panels, all of
    width <= dt; time-independent potentials are integrated exactly.
    """
    x = np.asarray(x)
    t_lo = np.broadcast_to(np.asarray(t_lo, dtype=float), x.shape)
    t_hi = np.broadcast_to(np.asarray(t_hi, dtype=float), x.shape)
    length = np.maximum(t_hi - t_lo, 0.0)
    if v.time_independent:
        return v.inverse_power(x, 0.0, sigma) * length
    if length.size == 0:
        return length.copy()
    panels = max(int(math.ceil(float(length.max()) / dt)), 1)
    acc = np.zeros(x.shape)
    for k in range(panels + 1):
        w = 0.5 if k in (0, panels) else 1.0
        acc += w * v.inverse_power(x, t_lo + length * (k / panels), sigma)
    return acc * length / panels


def growth_check(g: WeightedGraph, d: PseudoMetric, v: Potential, sigma: float, alpha: float,
                 condition_id: str, R_grid: Sequence[float], *, x0: Optional[int] = None,
                 theta1: Optional[float] = None, theta2: Optional[float] = None,
                 delta: Optional[float] = None, dt_quad: Optional[float] = None,
                 R0: Optional[float] = None, slope_tol: float = DEFAULT_SLOPE_TOL,
                 target: Optional[float] = None) -> GrowthVerdict:
    """Evaluate one weighted volume-growth condition over ``R_grid``."""
    if sigma <= 1:
        raise ValueError("sigma must exceed 1")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if condition_id not in CONDITIONS:
        raise ValueError(f"unknown condition {condition_id!r}")
    if x0 is not None and x0 != d.x0:
        d = distance_map(g, d.kind, x0, table=d.table)
    R = np.asarray(R_grid, dtype=float)
    R0 = float(R.min()) if R0 is None else float(R0)
    if R0 <= 1 or np.any(R < R0):
        raise ValueError("every radius must satisfy R >= R0 > 1")
    p = target_exponent(condition_id, sigma, alpha) if target is None else float(target)
    dist = d.dist
    mu = g.mu
    idx = np.arange(g.n)
    notes = []
    lhs = []

    if condition_id == "ER_spacetime":
        theta1 = 2 * (1 + alpha) if theta1 is None else float(theta1)
        theta2 = 4.0 if theta2 is None else float(theta2)
        if theta1 < 2 or theta2 < 2 or theta1 / theta2 < (1 + alpha) / 2:
            raise ValueError("need theta1, theta2 >= 2 and theta1/theta2 >= (1+alpha)/2")
        require_window(d, 2 ** (1 / theta1) * R.max(), "E_R spatial extent")
        dpow = d.power(theta1)
        for r in R:
            rt = r ** theta1
            hi = 2 * rt - dpow
            sel = hi >= 0
            lo = np.maximum(rt - dpow[sel], 0.0) ** (1 / theta2)
            up = hi[sel] ** (1 / theta2)
            step = r ** (theta1 / theta2) / 200 if dt_quad is None else dt_quad
            lhs.append(float(np.sum(time_integral(v, idx[sel], lo, up, sigma, step) * mu[sel])))

    elif condition_id in ("ball_volume", "annulus"):
        if not v.identically_one:
            raise ValueError(f"{condition_id} applies to the potential v = 1")
        extra = 1.0 if condition_id == "annulus" else 0.0
        require_window(d, R.max() + extra, "ball radius")
        for r in R:
            if condition_id == "ball_volume":
                lhs.append(float(mu[dist <= r].sum()))
            else:
                lhs.append(float(mu[(dist > r) & (dist <= r + 1)].sum()))

    elif condition_id == "ball_g_weighted":
        gw = v.spatial_lower().inverse_power(idx, 0.0, sigma)
        if delta is None:
            require_window(d, R.max(), "ball radius")
            for r in R:
                lhs.append(float(np.sum((gw * mu)[dist <= r])))
        else:
            for r in R:
                terms = gw * np.exp(-delta * dist / r) * mu
                lhs.append(float(terms.sum()))
                _window_note(notes, d, terms, r)

    elif condition_id in ("exp_inside", "exp_outside"):
        if delta is None or delta <= 0:
            raise ValueError(f"{condition_id} needs delta > 0")
        a = (1 + alpha) / 2
        for r in R:
            if condition_id == "exp_inside":
                require_window(d, r, "ball radius")
                sel = dist <= r
                lo, hi = r ** a, 2 * r ** a
            else:
                sel = dist > r
                lo, hi = 0.0, 2 * r ** a
            step = (hi - lo) / 200 if dt_quad is None else dt_quad
            terms = (time_integral(v, idx[sel], lo, hi, sigma, step)
                     * np.exp(-delta * dist[sel] / r) * mu[sel])
            lhs.append(float(terms.sum()))
            if condition_id == "exp_outside":
                full = np.zeros(g.n)
                full[sel] = terms
                _window_note(notes, d, full, r)

    elif condition_id == "finite_time_slab":
        if g.is_truncated or g.boundary.any():
            raise ValueError("finite_time_slab applies to finite graphs only")
        for r in R:
            step = r / 200 if dt_quad is None else dt_quad
            lhs.append(float(np.sum(time_integral(v, idx, r, 2 * r, sigma, step) * mu)))

    verdict = fit_growth(condition_id, R, lhs, p, slope_tol)
    verdict.notes = notes + verdict.notes
    return verdict


def _window_note(notes: list, d: PseudoMetric, terms: np.ndarray, r: float) -> None:
    rho = d.faithful_radius
    if not math.isfinite(rho):
        return
    total = float(terms.sum())
    edge = float(terms[d.dist > rho - 1].sum())
    if total > 0 and edge > 1e-6 * total:
        notes.append(f"R={r:g}: outermost unit shell carries {edge / total:.3g} of the sum")


# -- weighted l1 space ---------------------------------------------------------------

def radial_increments(d: PseudoMetric, values, max_radius: Optional[float] = None):
    """Sums of ``values`` over unit shells {k-1 < d <= k}, k = 0, 1, ... (k = 0 is d = 0)."""
    values = np.asarray(values, dtype=float)
    rho = d.faithful_radius if max_radius is None else max_radius
    finite = np.isfinite(d.dist)
    top = float(d.dist[finite].max()) if finite.any() else 0.0
    kmax = int(math.floor(min(rho, top)))
    shell = np.ceil(d.dist[finite]).astype(np.int64)
    keep = shell <= kmax
    inc = np.bincount(shell[keep], weights=values[finite][keep], minlength=kmax + 1)
    return np.arange(kmax + 1), inc


@dataclass
class XDeltaReport:
    delta: float
    radii: list
    partial_sums: list
    converged: bool
    value: float
    monotone: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def xdelta_norm(g: WeightedGraph, d: PseudoMetric, delta: float, f,
                radii: Optional[Sequence[float]] = None, x0: Optional[int] = None,
                rtol: float = 1e-10) -> XDeltaReport:
    """Partial sums of |f| e^{-delta d} mu over balls of growing radius."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if x0 is not None and x0 != d.x0:
        d = distance_map(g, d.kind, x0, table=d.table)
    terms = np.abs(np.asarray(f, dtype=float)) * np.exp(-delta * d.dist) * g.mu
    if radii is None:
        ks, inc = radial_increments(d, terms)
        radii = ks.astype(float)
        partial = np.cumsum(inc)
    else:
        radii = np.asarray(radii, dtype=float)
        require_window(d, float(radii.max()), "X_delta radius")
        order = np.argsort(d.dist)
        sorted_d = d.dist[order]
        cum = np.concatenate([[0.0], np.cumsum(terms[order])])
        partial = cum[np.searchsorted(sorted_d, radii, side="right")]
    value = float(partial[-1]) if len(partial) else 0.0
    last_inc = float(partial[-1] - partial[-2]) if len(partial) >= 2 else value
    converged = value == 0.0 or last_inc < rtol * value
    return XDeltaReport(float(delta), [float(r) for r in radii], [float(s) for s in partial],
                        bool(converged), value,
                        bool(np.all(np.diff(partial) >= 0)))


# -- initial data ----------------------------------------------------------------------

@dataclass
class InitialDataReport:
    R_grid: list
    S_values: list
    total: float
    liminf_proxy: float
    liminf_nonnegative: bool
    total_nonnegative: bool

    def to_dict(self) -> dict:
        return asdict(self)


def initial_data_report(g: WeightedGraph, d: PseudoMetric, u1, R_grid: Sequence[float],
                        x0: Optional[int] = None) -> InitialDataReport:
    """S(R) = sum_{B_R} u1^+ mu - sum_{B_2R} u1^- mu, and the sign of sum u1 mu.

    The liminf is approximated by the minimum of S over the largest half of
    the grid; it is a finite-sample proxy, not a limit.
    """
    if x0 is not None and x0 != d.x0:
        d = distance_map(g, d.kind, x0, table=d.table)
    R = np.asarray(R_grid, dtype=float)
    require_window(d, 2 * float(R.max()), "doubled radius 2R")
    u1 = np.asarray(u1, dtype=float)
    pos = np.maximum(u1, 0.0) * g.mu
    neg = np.maximum(-u1, 0.0) * g.mu
    S = [float(pos[d.dist <= r].sum() - neg[d.dist <= 2 * r].sum()) for r in R]
    top = np.sort(R)[len(R) // 2:]
    proxy = float(min(s for r, s in zip(R, S) if r in top))
    total = float(np.sum(u1 * g.mu))
    return InitialDataReport(R.tolist(), S, total, proxy, proxy >= 0, total >= 0)


# -- radial chains ---------------------------------------------------------------------

def sphere_volumes(g: WeightedGraph, d: PseudoMetric) -> np.ndarray:
    """Vol{x : d(x, x0) = k} for integer k up to the faithful radius."""
    finite = np.isfinite(d.dist)
    if not np.all(np.equal(np.mod(d.dist[finite], 1), 0)):
        raise ValueError("sphere volumes need an integer-valued metric")
    kmax = int(min(d.faithful_radius, d.dist[finite].max()))
    k = d.dist[finite].astype(np.int64)
    keep = k <= kmax
    return np.bincount(k[keep], weights=g.mu[finite][keep], minlength=kmax + 1)


def radial_chain(shell_volume: Callable[[np.ndarray], np.ndarray],
                 shell_term: Callable[[np.ndarray, float], np.ndarray],
                 R_grid: Sequence[float], kmax: int, log: bool = False) -> list:
    """sum_k Vol(S_k) * term(k, R) for radial integrands, truncated at ``kmax``.

    With ``log`` both callables return logarithms, for volumes that overflow.
    """
    k = np.arange(kmax + 1)
    vol = np.asarray(shell_volume(k), dtype=float)
    if log:
        return [float(np.sum(np.exp(vol + shell_term(k, float(r))))) for r in R_grid]
    return [float(np.sum(vol * shell_term(k, float(r)))) for r in R_grid]
