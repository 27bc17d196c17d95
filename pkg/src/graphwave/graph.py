"""Weighted graphs (V, omega, mu), the example families, and volumes.

Infinite graphs are represented by closed truncations around a base vertex.
Every truncated graph remembers which vertices lost neighbours to the
truncation (``boundary``) and how much edge weight they lost
(``missing_weight``), so that callers can exclude or extend them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    """Raised when a graph violates the weighted-graph axioms."""


class DisconnectedGraphWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable weighted graph with sparse symmetric adjacency.

    ``truncation`` is ``(metric_kind, radius)`` for windows cut out of an
    infinite graph and ``None`` for genuinely finite graphs.
    """

    adjacency: sp.csr_matrix
    mu: np.ndarray
    x0: int = 0
    coords: Optional[np.ndarray] = None
    fiber: Optional[np.ndarray] = None
    fiber_graph: Optional["WeightedGraph"] = None
    boundary: Optional[np.ndarray] = None
    missing_weight: Optional[np.ndarray] = None
    truncation: Optional[tuple] = None
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if self.boundary is None:
            object.__setattr__(self, "boundary", np.zeros(n, dtype=bool))
        if self.missing_weight is None:
            object.__setattr__(self, "missing_weight", np.zeros(n))
        for arr in (self.mu, self.boundary, self.missing_weight, self.coords, self.fiber):
            if arr is not None:
                arr.setflags(write=False)
        n_comp, _ = connected_components(self.adjacency, directed=False)
        object.__setattr__(self, "n_components", int(n_comp))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def __len__(self):
        return self.n

    @property
    def connected(self) -> bool:
        return self.n_components <= 1

    @cached_property
    def degree_weight(self) -> np.ndarray:
        """Sum of omega(x, y) over the neighbours present in the window."""
        out = np.asarray(self.adjacency.sum(axis=1)).ravel()
        out.setflags(write=False)
        return out

    @cached_property
    def row_index(self) -> np.ndarray:
        """Row of every stored adjacency entry, aligned with ``adjacency.indices``."""
        out = np.repeat(np.arange(self.n), np.diff(self.adjacency.indptr))
        out.setflags(write=False)
        return out

    @property
    def full_degree_weight(self) -> np.ndarray:
        """Weighted degree in the untruncated graph (present + clipped edges)."""
        return self.degree_weight + self.missing_weight

    @property
    def degree_bound(self) -> float:
        """The constant C with sum_y omega(x, y) <= C mu(x) for every x."""
        if self.n == 0:
            return 0.0
        return float(np.max(self.full_degree_weight / self.mu))

    @property
    def is_truncated(self) -> bool:
        return self.truncation is not None

    def neighbors(self, x: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[x]:a.indptr[x + 1]]

    def edges(self):
        """Undirected edge list as arrays (x, y, w) with x < y."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        return upper.row.astype(np.int64), upper.col.astype(np.int64), upper.data.copy()

    def label(self, x: int):
        if self.coords is None:
            return int(x)
        c = tuple(int(v) for v in self.coords[x])
        if self.fiber is not None:
            return (c, int(self.fiber[x]))
        return c

    def summary(self) -> dict:
        rows, _, _ = self.edges()
        return {
            "family": self.family,
            "params": dict(self.params),
            "vertices": int(self.n),
            "edges": int(rows.size),
            "x0": int(self.x0),
            "degree_bound": self.degree_bound,
            "connected": self.connected,
            "boundary_vertices": int(self.boundary.sum()),
            "truncation": list(self.truncation) if self.truncation else None,
            "total_volume": float(self.mu.sum()),
        }


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Membership mask over the vertices of one graph."""

    mask: np.ndarray

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "VertexSet":
        mask = np.zeros(n, dtype=bool)
        idx = np.fromiter((int(i) for i in indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError("vertex outside graph")
        mask[idx] = True
        return cls(mask)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, x):
        return bool(0 <= x < self.mask.size and self.mask[x])

    def __or__(self, other):
        return VertexSet(self.mask | other.mask)

    def __and__(self, other):
        return VertexSet(self.mask & other.mask)

    def __sub__(self, other):
        return VertexSet(self.mask & ~other.mask)


def _as_mask(g: WeightedGraph, S) -> np.ndarray:
    if isinstance(S, VertexSet):
        mask = S.mask
    else:
        arr = np.asarray(S)
        if arr.dtype == bool:
            mask = arr
        else:
            return VertexSet.from_indices(g.n, arr.ravel()).mask
    if mask.shape != (g.n,):
        raise IndexError("vertex set does not belong to this graph")
    return mask


def volume(g: WeightedGraph, S) -> float:
    """Vol(S) = sum of mu over S."""
    mask = _as_mask(g, S)
    return float(g.mu[mask].sum())


def _assemble(n, rows, cols, weights) -> sp.csr_matrix:
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    w = np.concatenate([weights, weights]).astype(float)
    a = sp.csr_matrix((w, (r, c)), shape=(n, n))
    a.sum_duplicates()
    a.sort_indices()
    return a


def _warn_if_disconnected(g: WeightedGraph):
    if not g.connected:
        warnings.warn(
            f"graph has {g.n_components} connected components",
            DisconnectedGraphWarning,
            stacklevel=3,
        )


def build_graph(
    vertex_count: int,
    edges: Sequence[tuple],
    measure,
    x0: int = 0,
    coords=None,
    boundary=None,
    missing_weight=None,
) -> WeightedGraph:
    """Validate an explicit edge list and return a WeightedGraph.

    Each undirected edge may be listed once or in both orientations, but
    a pair listed twice must carry the same weight.
    """
    n = int(vertex_count)
    if n < 1:
        raise GraphError("vertex_count must be positive")
    mu = np.broadcast_to(np.asarray(measure, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise GraphError("node measure must be strictly positive")

    seen: dict[tuple[int, int], float] = {}
    for e in edges:
        x, y, w = int(e[0]), int(e[1]), float(e[2])
        if x == y:
            raise GraphError(f"loop edge at vertex {x}")
        if not (0 <= x < n and 0 <= y < n):
            raise GraphError(f"edge ({x}, {y}) references a vertex outside the graph")
        if not (w > 0 and math.isfinite(w)):
            raise GraphError(f"edge ({x}, {y}) has nonpositive weight {w}")
        key = (min(x, y), max(x, y))
        if key in seen and seen[key] != w:
            raise GraphError(f"conflicting weights for edge {key}: {seen[key]} vs {w}")
        seen[key] = w

    if seen:
        keys = np.array(list(seen.keys()), dtype=np.int64)
        rows, cols = keys[:, 0], keys[:, 1]
        weights = np.fromiter(seen.values(), dtype=float)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        weights = np.zeros(0)
    if not 0 <= x0 < n:
        raise GraphError("x0 outside graph")
    g = WeightedGraph(
        _assemble(n, rows, cols, weights),
        mu,
        x0=int(x0),
        coords=None if coords is None else np.asarray(coords, dtype=np.int64).reshape(n, -1),
        boundary=None if boundary is None else np.asarray(boundary, dtype=bool).copy(),
        missing_weight=None if missing_weight is None else np.asarray(missing_weight, float).copy(),
    )
    _warn_if_disconnected(g)
    return g


def _lattice_points(N: int, radius: float):
    r = max(float(radius), 0.0)
    m = int(math.floor(r))
    axis = np.arange(-m, m + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axis] * N), indexing="ij"), axis=-1).reshape(-1, N)
    keep = (grid * grid).sum(axis=1) <= r * r
    pts = grid[keep]
    lookup = np.full((2 * m + 1,) * N, -1, dtype=np.int64)
    lookup[tuple((pts + m).T)] = np.arange(pts.shape[0])
    return pts, lookup, m


def _lattice_edges(pts, lookup, m):
    N = pts.shape[1]
    ids = np.arange(pts.shape[0])
    rows, cols = [], []
    for k in range(N):
        shifted = pts.copy()
        shifted[:, k] += 1
        ok = shifted[:, k] <= m
        nb = np.full(pts.shape[0], -1, dtype=np.int64)
        nb[ok] = lookup[tuple((shifted[ok] + m).T)]
        has = nb >= 0
        rows.append(ids[has])
        cols.append(nb[has])
    return np.concatenate(rows), np.concatenate(cols)


def lattice_zn(N: int, radius: float) -> WeightedGraph:
    """Closed Euclidean ball of Z^N: omega = 1 between nearest neighbours, mu = 2N."""
    if int(N) != N or N < 1:
        raise GraphError("lattice dimension must be a positive integer")
    N = int(N)
    pts, lookup, m = _lattice_points(N, radius)
    rows, cols = _lattice_edges(pts, lookup, m)
    n = pts.shape[0]
    adj = _assemble(n, rows, cols, np.ones(rows.size))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    missing = 2.0 * N - deg
    origin = int(lookup[(m,) * N])
    return WeightedGraph(
        adj,
        np.full(n, 2.0 * N),
        x0=origin,
        coords=pts,
        boundary=missing > 0,
        missing_weight=missing,
        truncation=("euclidean", max(float(radius), 0.0)),
        family="lattice",
        params={"N": N, "radius": max(float(radius), 0.0)},
    )


def homogeneous_tree(N: int, depth: int) -> WeightedGraph:
    """Rooted tree in which every vertex has N children; mu = 1, omega = 1.

    Vertices are numbered level by level, so the children of ``i`` are
    ``N*i + 1 .. N*i + N`` and the sphere of radius k holds N**k vertices.
    """
    if int(N) != N or N < 2:
        raise GraphError("branching number must be an integer > 1")
    if int(depth) != depth or depth < 0:
        raise GraphError("depth must be a nonnegative integer")
    N, depth = int(N), int(depth)
    n = (N ** (depth + 1) - 1) // (N - 1)
    child = np.arange(1, n, dtype=np.int64)
    parent = (child - 1) // N
    adj = _assemble(n, parent, child, np.ones(child.size))
    level = np.repeat(np.arange(depth + 1), [N ** k for k in range(depth + 1)])
    leaves = level == depth
    return WeightedGraph(
        adj,
        np.ones(n),
        x0=0,
        boundary=leaves,
        missing_weight=np.where(leaves, float(N), 0.0),
        truncation=("combinatorial", float(depth)),
        family="tree",
        params={"N": N, "depth": depth},
    )


def product_graph(N: int, radius: float, W: WeightedGraph, w0: Optional[int] = None) -> WeightedGraph:
    """Truncated Z^N times a finite graph W.

    (x, w1) ~ (x, w2) with weight omega_W(w1, w2) when w1 ~ w2, and
    (x1, w) ~ (x2, w) with weight 1 when x1 ~ x2; mu = max(2N, mu_W(w)).
    Vertex (x, w) has index ``lattice_index(x) * |W| + w``.
    """
    if W is None or W.n == 0:
        raise GraphError("fiber graph W must be nonempty")
    if W.is_truncated:
        raise GraphError("fiber graph W must be finite")
    if not W.connected:
        raise GraphError("fiber graph W must be connected")
    N = int(N)
    w0 = 0 if w0 is None else int(w0)
    if not 0 <= w0 < W.n:
        raise GraphError("w0 outside fiber graph")
    lat = lattice_zn(N, radius)
    nl, nw = lat.n, W.n
    lr, lc, _ = lat.edges()
    wr, wc, ww = W.edges()
    fiber_ids = np.arange(nw, dtype=np.int64)
    lattice_ids = np.arange(nl, dtype=np.int64)
    rows = np.concatenate([
        (lr[:, None] * nw + fiber_ids[None, :]).ravel(),
        (lattice_ids[:, None] * nw + wr[None, :]).ravel(),
    ])
    cols = np.concatenate([
        (lc[:, None] * nw + fiber_ids[None, :]).ravel(),
        (lattice_ids[:, None] * nw + wc[None, :]).ravel(),
    ])
    weights = np.concatenate([np.ones(lr.size * nw), np.tile(ww, nl)])
    n = nl * nw
    mu = np.maximum(2.0 * N, np.tile(W.mu, nl))
    return WeightedGraph(
        _assemble(n, rows, cols, weights),
        mu,
        x0=int(lat.x0 * nw + w0),
        coords=np.repeat(lat.coords, nw, axis=0),
        fiber=np.tile(fiber_ids, nl),
        fiber_graph=W,
        boundary=np.repeat(lat.boundary, nw),
        missing_weight=np.repeat(lat.missing_weight, nw),
        truncation=("product", lat.truncation[1]),
        family="product",
        params={"N": N, "radius": lat.params["radius"], "fiber_size": nw, "w0": w0},
    )


def path_graph(n: int, weight: float = 1.0, measure=1.0) -> WeightedGraph:
    return build_graph(n, [(i, i + 1, weight) for i in range(n - 1)], measure)


def random_connected_graph(n: int, extra_edges: int = 0, seed=0, weights=(0.5, 2.0),
                           measures=(0.5, 2.0)) -> WeightedGraph:
    """Random spanning tree plus ``extra_edges`` random chords, with uniform weights and measure."""
    rng = np.random.default_rng(seed)
    edges = {}
    for x in range(1, n):
        y = int(rng.integers(0, x))
        edges[(y, x)] = float(rng.uniform(*weights))
    for _ in range(extra_edges):
        x, y = sorted(int(a) for a in rng.choice(n, size=2, replace=False)) if n > 1 else (0, 0)
        if x != y:
            edges.setdefault((x, y), float(rng.uniform(*weights)))
    mu = rng.uniform(*measures, size=n)
    return build_graph(n, [(x, y, w) for (x, y), w in edges.items()], mu)


# -- line-oriented description files -------------------------------------------------

def format_graph(g: WeightedGraph) -> str:
    """Serialise to the ``graph`` / ``mu`` / ``edge`` text format.

    Optional ``root``, ``coord`` and ``boundary`` lines carry the base point,
    lattice labels and clipped weight so that truncated windows round-trip.
    """
    lines = [f"graph {g.n}", f"root {g.x0}"]
    for x in range(g.n):
        lines.append(f"mu {x} {float(g.mu[x])!r}")
    rows, cols, w = g.edges()
    for x, y, wt in zip(rows, cols, w):
        lines.append(f"edge {int(x)} {int(y)} {float(wt)!r}")
    if g.coords is not None and g.fiber is None:
        for x in range(g.n):
            lines.append("coord " + " ".join(str(int(c)) for c in [x, *g.coords[x]]))
    for x in np.flatnonzero(g.boundary):
        lines.append(f"boundary {int(x)} {float(g.missing_weight[x])!r}")
    return "\n".join(lines) + "\n"


def write_graph(g: WeightedGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_graph(g))


def parse_graph(text: str) -> WeightedGraph:
    n = None
    mu: dict[int, float] = {}
    edges = []
    coords: dict[int, list[int]] = {}
    boundary: dict[int, float] = {}
    x0 = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key, args = parts[0], parts[1:]
        try:
            if key == "graph":
                n = int(args[0])
            elif key == "mu":
                mu[int(args[0])] = float(args[1])
            elif key == "edge":
                edges.append((int(args[0]), int(args[1]), float(args[2])))
            elif key == "root":
                x0 = int(args[0])
            elif key == "coord":
                coords[int(args[0])] = [int(a) for a in args[1:]]
            elif key == "boundary":
                boundary[int(args[0])] = float(args[1])
            else:
                raise GraphError(f"line {lineno}: unknown record {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"line {lineno}: malformed record {raw!r}") from exc
    if n is None:
        raise GraphError("missing 'graph <vertex_count>' header")
    missing = [x for x in range(n) if x not in mu]
    if missing:
        raise GraphError(f"no measure given for vertices {missing[:5]}")
    coord_arr = None
    if coords:
        if len(coords) != n:
            raise GraphError("coord lines must cover every vertex")
        coord_arr = np.array([coords[x] for x in range(n)], dtype=np.int64)
    bmask = np.zeros(n, dtype=bool)
    bweight = np.zeros(n)
    for x, w in boundary.items():
        bmask[x] = True
        bweight[x] = w
    return build_graph(n, edges, [mu[x] for x in range(n)], x0=x0, coords=coord_arr,
                       boundary=bmask, missing_weight=bweight)


def read_graph(path) -> WeightedGraph:
    with open(path) as fh:
        return parse_graph(fh.read())
