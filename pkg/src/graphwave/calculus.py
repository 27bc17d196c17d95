"""Graph Laplacian, integration by parts, and distance-Laplacian estimates.

Graph functions are plain numpy arrays indexed by vertex.  Laplacian values
at boundary vertices of a truncated window only see surviving neighbours;
``g.boundary`` flags them and every report here excludes them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .graph import WeightedGraph
from .metric import PseudoMetric, TruncationError, distance_map

EXACT_RTOL = 1e-12


class PreconditionError(ValueError):
    pass


class HypothesisViolation(ValueError):
    """A numerically checked hypothesis of an identity does not hold."""


def laplacian_apply(g: WeightedGraph, f, exterior: str = "free") -> np.ndarray:
    """(Delta f)(x) = (1/mu(x)) sum_y omega(x, y) (f(y) - f(x)).

    Summed in difference form so constants map to exactly zero.
    ``exterior="zero"`` treats clipped neighbours as carrying f = 0, which is
    the homogeneous extension of f past the window.
    """
    if exterior not in ("free", "zero"):
        raise ValueError(f"unknown exterior policy {exterior!r}")
    f = np.asarray(f, dtype=float)
    if f.ndim == 2:
        return np.column_stack([laplacian_apply(g, f[:, k], exterior) for k in range(f.shape[1])])
    adj = g.adjacency
    rows = g.row_index
    acc = np.bincount(rows, weights=adj.data * (f[adj.indices] - f[rows]), minlength=g.n)
    if exterior == "zero":
        acc = acc - g.missing_weight * f
    return acc / g.mu


def gradient_pairing(g: WeightedGraph, f, h) -> float:
    """-1/2 sum_{x,y} omega(x,y) (f(y)-f(x)) (h(y)-h(x)), summed edge by edge."""
    rows, cols, w = g.edges()
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    return -float(np.sum(w * (f[cols] - f[rows]) * (h[cols] - h[rows])))


@dataclass
class IBPResult:
    lhs: float
    middle: float
    rhs: float
    scale: float

    @property
    def max_gap(self) -> float:
        return max(abs(self.lhs - self.middle), abs(self.middle - self.rhs), abs(self.lhs - self.rhs))

    @property
    def agree(self) -> bool:
        return self.max_gap <= EXACT_RTOL * self.scale


def _safely_supported(g: WeightedGraph, f) -> bool:
    nz = np.asarray(f) != 0
    return not np.any(nz & g.boundary)


def integration_by_parts_check(g: WeightedGraph, f, h) -> IBPResult:
    """Evaluate the three members of the finite-support integration by parts formula."""
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    if not (_safely_supported(g, f) or _safely_supported(g, h)):
        raise PreconditionError(
            "neither function is supported away from the truncation boundary"
        )
    lf = laplacian_apply(g, f)
    lh = laplacian_apply(g, h)
    lhs = float(np.sum(lf * h * g.mu))
    rhs = float(np.sum(f * lh * g.mu))
    middle = gradient_pairing(g, f, h)
    rows, cols, w = g.edges()
    scale = (
        float(np.sum(np.abs(lf * h) * g.mu))
        + float(np.sum(np.abs(f * lh) * g.mu))
        + float(np.sum(w * np.abs(f[cols] - f[rows]) * np.abs(h[cols] - h[rows])))
    )
    return IBPResult(lhs, middle, rhs, max(scale, np.finfo(float).tiny))


@dataclass
class WeightedIBPResult:
    """Interior sums of u*Delta(phi)*mu and Delta(u)*phi*mu plus the tail bound.

    Both sums run over non-boundary vertices only, where the Laplacian is
    that of the infinite graph.  ``tail_bound`` bounds the contribution of
    the boundary shell, so the two sums must differ by at most
    ``tail_bound`` plus rounding.
    """

    u_lap_phi: float
    lap_u_phi: float
    tail_bound: float
    phi_constant: float
    xdelta_value: float
    xdelta_tail_estimate: float
    scale: float

    @property
    def gap(self) -> float:
        return abs(self.u_lap_phi - self.lap_u_phi)

    @property
    def agree(self) -> bool:
        return self.gap <= self.tail_bound + EXACT_RTOL * self.scale


def weighted_ibp_check(g: WeightedGraph, d: PseudoMetric, delta: float, u, phi,
                       phi_constant: Optional[float] = None, x0: Optional[int] = None,
                       min_shells: int = 4) -> WeightedIBPResult:
    """Integration by parts for u in the weighted l1 space and exponentially decaying phi.

    Hypothesis (i) is checked through the radial partial sums of
    |u| e^{-delta d} mu: their increments must be eventually decreasing.
    Hypothesis (ii) is |phi| <= C e^{-delta d}; when ``phi_constant`` is
    given it is checked vertex by vertex, otherwise the smallest valid C is
    reported.
    """
    from .conditions import radial_increments

    if delta <= 0:
        raise ValueError("delta must be positive")
    if x0 is not None and x0 != d.x0:
        d = distance_map(g, d.kind, x0, table=d.table)
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    weight = np.exp(-delta * d.dist)

    _, inc = radial_increments(d, np.abs(u) * weight * g.mu)
    if inc.size >= 2 * min_shells:
        last = float(inc[-min_shells:].sum())
        prev = float(inc[-2 * min_shells:-min_shells].sum())
        if last > 0 and last >= prev:
            raise HypothesisViolation(
                "sum of |u| e^{-delta d} mu does not settle: the outer shells carry "
                f"{last:.6g} >= {prev:.6g} of the previous block"
            )
        ratio = last / prev if prev > 0 else 0.0
        tail_est = last * ratio / (1 - ratio)
    else:
        tail_est = 0.0

    ratio_phi = np.abs(phi) / weight
    if phi_constant is None:
        C = float(ratio_phi.max()) if ratio_phi.size else 0.0
    else:
        C = float(phi_constant)
        bad = np.flatnonzero(ratio_phi > C * (1 + EXACT_RTOL))
        if bad.size:
            raise HypothesisViolation(
                f"|phi| <= C e^(-delta d) fails at vertex {int(bad[0])} "
                f"(ratio {ratio_phi[bad[0]]:.6g} > C = {C:.6g})"
            )

    interior = ~g.boundary
    lap_phi = laplacian_apply(g, phi)
    lap_u = laplacian_apply(g, u)
    a = float(np.sum((u * lap_phi * g.mu)[interior]))
    b = float(np.sum((lap_u * phi * g.mu)[interior]))

    # vertices whose Laplacian is clipped, plus their neighbours
    shell = g.boundary.copy()
    shell[g.adjacency[np.flatnonzero(g.boundary)].indices] = True
    j = d.jump
    cdeg = g.degree_bound
    shell_mass = float(np.sum((np.abs(u) * weight * g.mu)[shell]))
    tail_bound = C * cdeg * (2.0 + 2.0 * math.exp(delta * j)) * shell_mass
    scale = float(np.sum(np.abs(u * lap_phi) * g.mu) + np.sum(np.abs(lap_u * phi) * g.mu))
    return WeightedIBPResult(a, b, tail_bound, C, float(np.sum(np.abs(u) * weight * g.mu)),
                             tail_est, max(scale, np.finfo(float).tiny))


@dataclass
class LaplacianReport:
    alpha: float
    R0: float
    sup_one_sided: float
    sup_two_sided: float
    sup_power: float
    boundary_excluded: int
    outside_count: int
    jump: float
    degree_bound: float
    remark_bound: float
    forward_constant: Optional[float] = None
    backward_constant: Optional[float] = None
    forward_violations: Optional[int] = None
    backward_violations: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)


def distance_laplacian_report(g: WeightedGraph, d: PseudoMetric, alpha: float, R0: float,
                              x0: Optional[int] = None, cross_check: bool = True) -> LaplacianReport:
    """Sup-norm data for d^alpha Delta d outside B_R0 and for Delta d^(1+alpha).

    With ``cross_check`` (and R0 >= 2j) the two Taylor-expansion chains
    linking the one-sided forms are evaluated vertex by vertex: the
    remainder is bounded with (d - j)^(alpha - 1) j^2, and each chain yields
    its own constant.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if R0 <= 1:
        raise ValueError("R0 must exceed 1")
    if x0 is not None and x0 != d.x0:
        d = distance_map(g, d.kind, x0, table=d.table)
    dist = d.dist
    if np.any(g.boundary & (dist <= R0)):
        raise TruncationError(f"ball of radius {R0:g} reaches the truncation boundary")

    interior = ~g.boundary
    outside = interior & (dist > R0)
    lap_d = laplacian_apply(g, dist)
    lap_pow = laplacian_apply(g, d.power(1 + alpha))

    def _sup(values, mask):
        return float(values[mask].max()) if mask.any() else 0.0

    da = dist ** alpha
    one = _sup(da * lap_d, outside)
    two = _sup(da * np.abs(lap_d), outside)
    powr = _sup(np.abs(lap_pow), interior)
    j = d.jump
    cdeg = g.degree_bound
    rep = LaplacianReport(alpha, R0, one, two, powr, int(g.boundary.sum()), int(outside.sum()),
                          j, cdeg, j * cdeg)

    if cross_check and R0 >= 2 * j and outside.any():
        rowsum = g.full_degree_weight / g.mu
        rem = np.zeros(g.n)
        if alpha > 0:
            rem[outside] = rowsum[outside] * (dist[outside] - j) ** (alpha - 1) * j * j
        abs_pow = np.abs(lap_pow)
        abs_lin = da * np.abs(lap_d)
        tol = EXACT_RTOL * (1 + abs_pow + abs_lin)
        fwd_point = (1 + alpha) * abs_lin + 0.5 * alpha * (1 + alpha) * rem
        bwd_point = abs_pow / (1 + alpha) + 0.5 * alpha * rem
        rep.forward_violations = int(np.sum((abs_pow > fwd_point + tol)[outside]))
        rep.backward_violations = int(np.sum((abs_lin > bwd_point + tol)[outside]))
        inner = interior & (dist <= R0)
        rem_sup = cdeg * (R0 - j) ** (alpha - 1) * j * j if alpha > 0 else 0.0
        rep.forward_constant = max((1 + alpha) * two + 0.5 * alpha * (1 + alpha) * rem_sup,
                                   _sup(abs_pow, inner))
        rep.backward_constant = powr / (1 + alpha) + 0.5 * alpha * rem_sup
    return rep
