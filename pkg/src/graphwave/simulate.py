"""Leapfrog integration of u_tt = Delta u + v|u|^sigma and the very weak residual."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .calculus import laplacian_apply
from .conditions import Potential
from .cutoff import CutoffFamily
from .graph import WeightedGraph
from .metric import PseudoMetric, TruncationError

SUPPORT_EPS = 1e-14
GAUSS_NODES = 4
BOUNDARY_POLICIES = {"zero_exterior": "zero", "free": "free"}


def stable_dt(g: WeightedGraph, safety: float = 1.0, cap: float = 1.0) -> float:
    """safety * 2 / sqrt(lam), lam = 2 max_x (1/mu) sum_y omega: a Gershgorin bound for -Delta."""
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    lam = 2.0 * float(np.max(g.full_degree_weight / g.mu)) if g.n else 0.0
    if lam == 0:
        return float(cap)
    return safety * 2.0 / math.sqrt(lam)


@dataclass
class Trajectory:
    graph: WeightedGraph
    dt: float
    T: float
    sigma: float
    potential: Optional[Potential]
    u0: np.ndarray
    u1: np.ndarray
    boundary: str
    threshold: float
    status: str = "completed"
    steps: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    sup_norms: list = field(default_factory=list)
    l1_norms: list = field(default_factory=list)
    blowup_step: Optional[int] = None
    blowup_time: Optional[float] = None
    blowup_norm: Optional[float] = None
    unstable_step: Optional[int] = None
    contact_step: Optional[int] = None
    stride: int = 1
    source: Optional[Callable] = None
    nonlinear: bool = True

    @property
    def last_step(self) -> int:
        return len(self.sup_norms) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.sup_norms)) * self.dt

    @property
    def boundary_clean(self) -> bool:
        """Support never came within one edge of the truncation boundary."""
        return self.contact_step is None

    def snapshot_array(self) -> np.ndarray:
        return np.asarray(self.snapshots)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "dt": self.dt,
            "steps": self.last_step,
            "blowup_step": self.blowup_step,
            "blowup_time": self.blowup_time,
            "boundary_clean": self.boundary_clean,
        }


def _boundary_shell(g: WeightedGraph) -> np.ndarray:
    shell = g.boundary.copy()
    if shell.any():
        shell[g.adjacency[np.flatnonzero(g.boundary)].indices] = True
    return shell


def integrate_wave(g: WeightedGraph, v: Optional[Potential], sigma: float, u0, u1, dt: float,
                   T: float, blowup_threshold: Optional[float] = None,
                   boundary: str = "zero_exterior", *, stride: int = 1,
                   source: Optional[Callable] = None, nonlinear: bool = True,
                   delta: Optional[float] = None, metric: Optional[PseudoMetric] = None
                   ) -> Trajectory:
    """Explicit leapfrog for u_tt = Delta u + v|u|^sigma (+ optional source(t)).

    ``nonlinear=False`` drops the v|u|^sigma term (linear diagnostic mode).
    Stops at the first step whose sup norm exceeds the threshold
    (default 1e6 times the initial scale) or turns non-finite.
    """
    if boundary not in BOUNDARY_POLICIES:
        raise ValueError(f"unknown boundary policy {boundary!r}")
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    if dt > stable_dt(g, 1.0) * (1 + 1e-12):
        raise ValueError(f"dt = {dt:g} exceeds the stability limit {stable_dt(g, 1.0):g}")
    if nonlinear and sigma <= 1:
        raise ValueError("sigma must exceed 1")
    u0 = np.array(u0, dtype=float)
    u1 = np.array(u1, dtype=float)
    scale = max(np.abs(u0).max(initial=0.0), np.abs(u1).max(initial=0.0))
    if blowup_threshold is None:
        blowup_threshold = 1e6 * scale if scale > 0 else 1e6
    if blowup_threshold <= 0:
        raise ValueError("blowup threshold must be positive")
    if v is None:
        v = Potential.one()
    ext = BOUNDARY_POLICIES[boundary]
    idx = np.arange(g.n)
    v_fixed = v(idx, 0.0) if (nonlinear and v.time_independent) else None
    shell = _boundary_shell(g)
    weight = None
    if delta is not None:
        if metric is None:
            raise ValueError("delta needs a metric for the weighted norm")
        weight = np.exp(-delta * metric.dist) * g.mu

    def force(u, t):
        out = laplacian_apply(g, u, exterior=ext)
        if nonlinear:
            vv = v_fixed if v_fixed is not None else v(idx, t)
            out = out + vv * np.abs(u) ** sigma
        if source is not None:
            out = out + source(t)
        return out

    traj = Trajectory(g, float(dt), float(T), float(sigma), v, u0.copy(), u1.copy(), boundary,
                      float(blowup_threshold), stride=int(stride), source=source,
                      nonlinear=nonlinear)

    def record(n, u):
        sup = float(np.abs(u).max(initial=0.0))
        traj.sup_norms.append(sup)
        traj.l1_norms.append(float(np.sum(np.abs(u) * weight)) if weight is not None else None)
        if traj.contact_step is None and np.any(shell & (np.abs(u) > SUPPORT_EPS)):
            traj.contact_step = n
        if n % traj.stride == 0:
            traj.steps.append(n)
            traj.snapshots.append(u.copy())
        if not np.all(np.isfinite(u)):
            traj.status = "unstable"
            traj.unstable_step = n
            return False
        if sup > blowup_threshold:
            traj.status = "blew_up"
            traj.blowup_step = n
            traj.blowup_time = n * dt
            traj.blowup_norm = sup
            return False
        return True

    n_steps = max(int(math.ceil(T / dt - 1e-9)), 1)
    prev = u0
    with np.errstate(over="ignore", invalid="ignore"):
        if record(0, prev):
            cur = u0 + dt * u1 + 0.5 * dt * dt * force(u0, 0.0)
            ok = record(1, cur)
            n = 1
            while ok and n < n_steps:
                nxt = 2 * cur - prev + dt * dt * force(cur, n * dt)
                prev, cur = cur, nxt
                n += 1
                ok = record(n, cur)
            if traj.steps[-1] != traj.last_step:
                traj.steps.append(traj.last_step)
                traj.snapshots.append(cur.copy())
    return traj


def leapfrog_continue(g: WeightedGraph, prev, cur, dt: float, n: int,
                      boundary: str = "zero_exterior") -> tuple:
    """Advance the linear recurrence n steps from (u^{k-1}, u^k); returns the last pair."""
    ext = BOUNDARY_POLICIES[boundary]
    prev = np.array(prev, dtype=float)
    cur = np.array(cur, dtype=float)
    for _ in range(n):
        prev, cur = cur, 2 * cur - prev + dt * dt * laplacian_apply(g, cur, exterior=ext)
    return prev, cur


def energy(g: WeightedGraph, prev, cur, nxt, dt: float, boundary: str = "zero_exterior") -> float:
    """1/2 sum mu u_t^2 + 1/4 sum_{x,y} omega (grad u)^2 with centred velocity at the middle step."""
    ut = (np.asarray(nxt) - np.asarray(prev)) / (2 * dt)
    u = np.asarray(cur, dtype=float)
    rows, cols, w = g.edges()
    pot = 0.5 * float(np.sum(w * (u[cols] - u[rows]) ** 2))
    if boundary == "zero_exterior":
        pot += 0.5 * float(np.sum(g.missing_weight * u * u))
    return 0.5 * float(np.sum(g.mu * ut * ut)) + pot


def write_series(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["step", "time", "sup_norm", "l1_weighted_norm"])
        for n, (sup, l1) in enumerate(zip(traj.sup_norms, traj.l1_norms)):
            out.writerow([n, repr(n * traj.dt), repr(sup), "" if l1 is None else repr(l1)])


# -- very weak residual ----------------------------------------------------------------

@dataclass
class ResidualReport:
    value: float
    dt: float
    error_scale: float
    value_half_dt: Optional[float] = None
    terms: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        """Residual is not below -error_scale (inequality direction preserved)."""
        return self.value >= -self.error_scale


def _residual_value(traj: Trajectory, fam: CutoffFamily, v: Potential, sigma: float,
                    u0, u1) -> tuple:
    if traj.stride != 1:
        raise ValueError("residual needs every time step (stride 1)")
    g = traj.graph
    ext = BOUNDARY_POLICIES[traj.boundary]
    t_end = traj.last_step * traj.dt
    if fam.time_support > t_end + 1e-12:
        raise ValueError(
            f"test function lives until t = {fam.time_support:g} but the valid prefix ends at {t_end:g}"
        )
    if fam.family == "compact":
        reach = fam.spatial_support + fam.metric.jump
        if reach > fam.metric.faithful_radius:
            raise TruncationError(f"test-function support radius {reach:g} escapes the truncation")
    elif traj.contact_step is not None and traj.contact_step * traj.dt <= fam.time_support:
        # phi never vanishes; the truncated sums stand in for the full graph only while
        # u has not reached the boundary
        raise TruncationError(
            f"trajectory touches the boundary at t = {traj.contact_step * traj.dt:g}, "
            f"inside the test-function lifetime {fam.time_support:g}"
        )
    mu = g.mu
    idx = np.arange(g.n)
    last = min(int(math.ceil(fam.time_support / traj.dt - 1e-9)), traj.last_step)
    terms = dict(u_phi_tt=0.0, lap_u_phi=0.0, nonlinear=0.0)
    # product rule: u piecewise linear in time, phi exact at Gauss nodes, with the
    # steps split where phi_R(x, .) has profile junctions
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
    nodes = 0.5 * (1 + nodes)
    weights = 0.5 * weights
    dt = traj.dt
    cuts = fam.time_breakpoints()
    lap_prev = laplacian_apply(g, traj.snapshots[0], exterior=ext)
    for n in range(last):
        a, b = traj.snapshots[n], traj.snapshots[n + 1]
        lap_next = laplacian_apply(g, b, exterior=ext)
        t0 = n * dt
        inner = cuts[(cuts > t0) & (cuts < t0 + dt)]
        edges = np.concatenate([[0.0], (inner - t0) / dt, [1.0]])
        for lo, hi in zip(edges[:-1], edges[1:]):
            for node, wq in zip(nodes, weights):
                th = lo + (hi - lo) * node
                w = wq * (hi - lo) * dt
                t = t0 + th * dt
                u = (1 - th) * a + th * b
                phi = fam.value(t) * mu
                terms["u_phi_tt"] += w * float(np.sum(u * fam.dtt(t) * mu))
                terms["lap_u_phi"] += w * float(np.sum(((1 - th) * lap_prev + th * lap_next) * phi))
                if traj.nonlinear:
                    terms["nonlinear"] += w * float(np.sum(v(idx, t) * np.abs(u) ** sigma * phi))
        lap_prev = lap_next
    terms["u0_phi_t0"] = float(np.sum(np.asarray(u0) * fam.dt(0.0) * mu))
    terms["u1_phi0"] = float(np.sum(np.asarray(u1) * fam.value(0.0) * mu))
    value = (terms["u_phi_tt"] - terms["lap_u_phi"] + terms["u0_phi_t0"] - terms["u1_phi0"]
             - terms["nonlinear"])
    return value, terms


def weak_residual(traj: Trajectory, fam: CutoffFamily, v: Optional[Potential] = None,
                  sigma: Optional[float] = None, u0=None, u1=None,
                  refine: bool = True) -> ResidualReport:
    """[int sum u phi_tt - int sum Delta u phi + sum u0 phi_t(0) - sum u1 phi(0)] - int sum v|u|^sigma phi.

    Product rule in time (u linear between steps, phi exact at Gauss nodes on
    pieces split at the profile junctions), exact sums in space.  With ``refine`` the trajectory
    is recomputed at dt/2 and the Richardson estimate 4/3 |r(dt) - r(dt/2)|,
    doubled for safety, is reported as the discretisation error scale.
    """
    if traj.status == "unstable":
        raise ValueError("trajectory is unstable")
    v = traj.potential if v is None else v
    sigma = traj.sigma if sigma is None else sigma
    u0 = traj.u0 if u0 is None else u0
    u1 = traj.u1 if u1 is None else u1
    value, terms = _residual_value(traj, fam, v, sigma, u0, u1)
    if not refine:
        return ResidualReport(value, traj.dt, math.nan, None, terms)
    fine = integrate_wave(traj.graph, traj.potential, traj.sigma, traj.u0, traj.u1, traj.dt / 2,
                          traj.T, traj.threshold, traj.boundary, source=traj.source,
                          nonlinear=traj.nonlinear)
    value_half, _ = _residual_value(fine, fam, v, sigma, u0, u1)
    err = 2.0 * (4.0 / 3.0) * abs(value - value_half)
    return ResidualReport(value, traj.dt, err, value_half, terms)
