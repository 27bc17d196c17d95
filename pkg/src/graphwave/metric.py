"""Pseudo-metrics on graphs: combinatorial, Euclidean (lattice), product, tables."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .graph import VertexSet, WeightedGraph

KINDS = ("combinatorial", "euclidean", "product", "table")


class MetricError(ValueError):
    pass


class TruncationError(ValueError):
    """The finite window is too small for the requested radius."""


def bfs_distances(g: WeightedGraph, source: int) -> np.ndarray:
    """Edge-count distance from ``source``; unreachable vertices get inf."""
    adj = g.adjacency
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    k = 0
    while frontier.size:
        k += 1
        nbrs = np.unique(adj[frontier].indices)
        nbrs = nbrs[dist[nbrs] < 0]
        dist[nbrs] = k
        frontier = nbrs
    out = dist.astype(float)
    out[dist < 0] = np.inf
    return out


@dataclass(frozen=True, eq=False)
class PseudoMetric:
    kind: str
    graph: WeightedGraph
    x0: int
    dist: np.ndarray
    dist_sq: Optional[np.ndarray] = None
    table: Optional[np.ndarray] = None
    fiber_dist: Optional[np.ndarray] = None

    def __call__(self, x, y):
        return self.distance(x, y)

    def distance(self, x: int, y: int) -> float:
        return float(self.pair_distances(np.array([x]), np.array([y]))[0])

    def pair_distances(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        g = self.graph
        if self.kind == "table":
            return self.table[xs, ys].astype(float)
        if self.kind == "euclidean":
            diff = g.coords[xs] - g.coords[ys]
            return np.sqrt((diff * diff).sum(axis=1).astype(float))
        if self.kind == "product":
            diff = g.coords[xs] - g.coords[ys]
            dw = self.fiber_dist[g.fiber[xs], g.fiber[ys]]
            return np.sqrt(((diff * diff).sum(axis=1) + dw * dw).astype(float))
        out = np.empty(xs.size)
        for src in np.unique(xs):
            sel = xs == src
            out[sel] = bfs_distances(g, int(src))[ys[sel]]
        return out

    def edge_distances(self):
        """(x, y, d(x, y)) over the undirected edges."""
        rows, cols, _ = self.graph.edges()
        if self.kind == "combinatorial":
            return rows, cols, np.ones(rows.size)
        return rows, cols, self.pair_distances(rows, cols)

    def power(self, p: float) -> np.ndarray:
        """d(., x0)**p, exact in integer arithmetic for even p on lattices."""
        if self.dist_sq is not None and float(p).is_integer() and int(p) % 2 == 0:
            return (self.dist_sq.astype(float)) ** (int(p) // 2)
        return self.dist ** p

    def from_center(self, x0: int) -> np.ndarray:
        if x0 == self.x0:
            return self.dist
        return distance_map(self.graph, self.kind, x0, table=self.table).dist

    @cached_property
    def jump(self) -> float:
        return jump_size(self.graph, self)

    @cached_property
    def faithful_radius(self) -> float:
        """Largest r such that every vertex of the infinite graph with d <= r is present."""
        g = self.graph
        if g.truncation is not None and g.truncation[0] == self.kind and self.x0 == g.x0:
            return float(g.truncation[1])
        if not g.boundary.any():
            return math.inf
        return float(self.dist[g.boundary].min() - self.jump)


def distance_map(g: WeightedGraph, kind: str = "combinatorial", x0: Optional[int] = None,
                 table=None, seed: int = 0) -> PseudoMetric:
    """Build a pseudo-metric with d(., x0) precomputed."""
    if kind not in KINDS:
        raise MetricError(f"unknown metric kind {kind!r}")
    x0 = g.x0 if x0 is None else int(x0)
    if not 0 <= x0 < g.n:
        raise MetricError("x0 outside graph")
    if kind == "combinatorial":
        return PseudoMetric(kind, g, x0, bfs_distances(g, x0))
    if kind == "euclidean":
        if g.coords is None or g.fiber is not None:
            raise MetricError("euclidean metric needs lattice coordinates")
        diff = g.coords - g.coords[x0]
        sq = (diff * diff).sum(axis=1)
        return PseudoMetric(kind, g, x0, np.sqrt(sq.astype(float)), dist_sq=sq)
    if kind == "product":
        if g.coords is None or g.fiber is None or g.fiber_graph is None:
            raise MetricError("product metric needs a product graph")
        W = g.fiber_graph
        dW = np.stack([bfs_distances(W, w) for w in range(W.n)]).astype(np.int64)
        diff = g.coords - g.coords[x0]
        fw = dW[g.fiber, g.fiber[x0]]
        sq = (diff * diff).sum(axis=1) + fw * fw
        return PseudoMetric(kind, g, x0, np.sqrt(sq.astype(float)), dist_sq=sq, fiber_dist=dW)
    t = np.asarray(table, dtype=float)
    validate_table(t, g.n, seed=seed)
    return PseudoMetric(kind, g, x0, t[x0].copy(), table=t)


def validate_table(t: np.ndarray, n: int, samples: int = 2000, seed: int = 0) -> None:
    """Exact symmetry / zero-diagonal check plus random triangle spot checks."""
    if t.shape != (n, n):
        raise MetricError(f"metric table must be {n}x{n}")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise MetricError("metric table must be finite and nonnegative")
    if np.any(np.diag(t) != 0):
        raise MetricError("metric table must have zero diagonal")
    if np.any(t != t.T):
        raise MetricError("metric table must be symmetric")
    bad = triangle_violations(lambda a, b: t[a, b], n, samples, seed)
    if bad:
        raise MetricError(f"triangle inequality fails on {bad[0]}")


def triangle_violations(d, n: int, samples: int = 2000, seed: int = 0, tol: float = 0.0):
    rng = np.random.default_rng(seed)
    x, y, z = rng.integers(0, n, size=(3, samples))
    lhs = np.asarray(d(x, y), dtype=float)
    rhs = np.asarray(d(x, z), dtype=float) + np.asarray(d(z, y), dtype=float)
    bad = np.flatnonzero(lhs > rhs + tol)
    return [(int(x[i]), int(y[i]), int(z[i])) for i in bad]


def jump_size(g: WeightedGraph, d: PseudoMetric) -> float:
    """sup of d(x, y) over pairs with omega(x, y) > 0; 0 (with a warning) without edges."""
    _, _, dist = d.edge_distances()
    if dist.size == 0:
        warnings.warn("graph has no edges; jump size is 0", UserWarning, stacklevel=2)
        return 0.0
    return float(dist.max())


def ball(d: PseudoMetric, x0: Optional[int] = None, r: float = 0.0) -> VertexSet:
    """Closed ball {x : d(x, x0) <= r}."""
    if r < 0:
        raise MetricError("radius must be nonnegative")
    dist = d.from_center(d.x0 if x0 is None else x0)
    return VertexSet(dist <= r)


def annulus(d: PseudoMetric, x0: Optional[int], r1: float, r2: float) -> VertexSet:
    """{x : r1 < d(x, x0) <= r2}."""
    dist = d.from_center(d.x0 if x0 is None else x0)
    return VertexSet((dist > r1) & (dist <= r2))


def require_window(d: PseudoMetric, radius: float, what: str = "") -> None:
    if radius > d.faithful_radius:
        raise TruncationError(
            f"{what or 'requested radius'} {radius:g} exceeds the faithful radius "
            f"{d.faithful_radius:g} of the truncated graph"
        )
