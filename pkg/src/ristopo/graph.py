"""Communication graphs and the spectral/structural quantities computed on them."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .jacobi import jacobi_eigh

SYM_TOL = 1e-12
BRUTE_FORCE_CAP = 16

SINGLETON = "singleton"
CONNECTED = "connected"


class DisconnectedGraphError(ValueError):
    """Raised where a quantity is only meaningful on a connected graph."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected 0/1 graph on nodes ``0..n-1``."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.int8, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a)):
            raise ValueError("adjacency diagonal must be zero")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        a = np.zeros((n, n), dtype=np.int8)
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) outside 0..{n - 1}")
            a[u, v] = a[v, u] = 1
        return cls(a)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash((self.node_count, self.adjacency.tobytes()))

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum() // 2)

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(u), int(v)) for u, v in zip(iu, ju)]

    def non_edges(self) -> list[tuple[int, int]]:
        n = self.node_count
        return [(u, v) for u in range(n) for v in range(u + 1, n) if not self.adjacency[u, v]]

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adjacency[u, v])

    def edit(self, add: Iterable[tuple[int, int]] = (), remove: Iterable[tuple[int, int]] = ()) -> "Graph":
        """Return a copy with ``add`` applied first, then ``remove``."""
        a = self.adjacency.copy()
        for u, v in add:
            a[u, v] = a[v, u] = 1
        for u, v in remove:
            a[u, v] = a[v, u] = 0
        return Graph(a)

    def bfs_distances(self, source: int) -> np.ndarray:
        """Hop distances from ``source``; unreachable nodes get -1."""
        dist = np.full(self.node_count, -1, dtype=int)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(self.adjacency[u]):
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(int(v))
        return dist

    def is_connected(self) -> bool:
        return bool(np.all(self.bfs_distances(0) >= 0))

    def component_count(self) -> int:
        seen = np.zeros(self.node_count, dtype=bool)
        count = 0
        for s in range(self.node_count):
            if not seen[s]:
                count += 1
                seen |= self.bfs_distances(s) >= 0
        return count

    def distance_matrix(self) -> np.ndarray:
        return np.stack([self.bfs_distances(s) for s in range(self.node_count)])


# -- presets -----------------------------------------------------------------

def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 nodes")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(leaves: int) -> Graph:
    """K_{1,leaves} with the hub at node 0."""
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def complete_graph(n: int) -> Graph:
    return Graph(np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8))


def complete_bipartite_graph(a: int, b: int) -> Graph:
    return Graph.from_edges(a + b, [(i, a + j) for i in range(a) for j in range(b)])


def empty_graph(n: int) -> Graph:
    return Graph(np.zeros((n, n), dtype=np.int8))


# 8-car initial platoon (0-based node k is car k+1). Car 2 sees the (1,3)
# triangle, cars 6/7 and the (3,7), (2,6) pairs are unlinked, and after the
# revision C(3,7), C(2,6), D(1,3) the tolerable delays are 0.2682 s before and
# 0.2901 s after.
FIG3A_EDGES = [(0, 1), (0, 2), (0, 4), (0, 7), (1, 2), (2, 3), (3, 4), (3, 7), (4, 6), (4, 7), (5, 7)]
FIG3B_CONSTRUCT = [(2, 6), (1, 5)]
FIG3B_DECONSTRUCT = [(0, 2)]


def fig3a_candidate() -> Graph:
    return Graph.from_edges(8, FIG3A_EDGES)


def fig3b_candidate() -> Graph:
    return fig3a_candidate().edit(add=FIG3B_CONSTRUCT, remove=FIG3B_DECONSTRUCT)


PRESETS = {
    "star8": lambda: star_graph(7),
    "ring8": lambda: cycle_graph(8),
    "fig3a-candidate": fig3a_candidate,
    "fig3b-candidate": fig3b_candidate,
}


def preset(name: str) -> Graph:
    """Named topology: ``star8``, ``ring8``, ``fig3a-candidate`` or ``path-<n>``."""
    if name in PRESETS:
        return PRESETS[name]()
    if name.startswith("path-"):
        return path_graph(int(name.split("-", 1)[1]))
    raise ValueError(f"unknown graph preset {name!r}")


# -- serialization -----------------------------------------------------------

def write_edge_list(g: Graph, path) -> None:
    lines = [f"# nodes {g.node_count}"] + [f"{u} {v}" for u, v in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, n: Optional[int] = None) -> Graph:
    """Parse ``u v`` lines; ``# nodes N`` (or ``n``) fixes the node count."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "nodes" and n is None:
                n = int(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = 1 + max((max(e) for e in edges), default=-1)
    return Graph.from_edges(n, edges)


def write_adjacency_csv(g: Graph, path) -> None:
    rows = [",".join(str(int(x)) for x in row) for row in g.adjacency]
    Path(path).write_text("\n".join(rows) + "\n")


def read_adjacency_csv(path) -> Graph:
    return Graph(np.loadtxt(path, delimiter=",", dtype=int, ndmin=2))


def read_graph(path) -> Graph:
    return read_adjacency_csv(path) if str(path).endswith(".csv") else read_edge_list(path)


# -- spectra -----------------------------------------------------------------

@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: tuple[float, ...]
    lambda2: float = field(init=False)
    lambda_max: float = field(init=False)

    def __post_init__(self):
        ev = self.eigenvalues
        object.__setattr__(self, "lambda2", float(ev[1]) if len(ev) > 1 else 0.0)
        object.__setattr__(self, "lambda_max", float(ev[-1]))


def build_laplacian(g: Graph) -> np.ndarray:
    """L = D - A."""
    a = g.adjacency.astype(float)
    return np.diag(a.sum(axis=1)) - a


def normalized_laplacian(g: Graph) -> np.ndarray:
    """D^-1/2 L D^-1/2; every node needs at least one neighbor."""
    deg = g.degrees.astype(float)
    if np.any(deg == 0):
        raise DisconnectedGraphError("normalized Laplacian needs every degree > 0")
    s = 1.0 / np.sqrt(deg)
    return build_laplacian(g) * s[:, None] * s[None, :]


def spectrum(L) -> LaplacianSpectrum:
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {L.shape}")
    asym = np.max(np.abs(L - L.T)) if L.size else 0.0
    if asym > SYM_TOL:
        raise ValueError(f"matrix is not symmetric (max |L - L^T| = {asym:.3e})")
    w = jacobi_eigh(L)
    return LaplacianSpectrum(tuple(float(x) for x in w))


def graph_spectrum(g: Graph) -> LaplacianSpectrum:
    return spectrum(build_laplacian(g))


def spectra(graphs: list[Graph], normalized: bool = False) -> np.ndarray:
    """Ascending Laplacian spectra of equally sized graphs, solved as one batch."""
    if not graphs:
        return np.zeros((0, 0))
    build = normalized_laplacian if normalized else build_laplacian
    return jacobi_eigh(np.stack([build(g) for g in graphs]))


def tolerable_delay(lambda_max: float) -> float:
    """Largest uniform delay pi/(2 lambda_max) under which delayed averaging converges."""
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive (got {lambda_max}); graph is empty or trivial")
    return math.pi / (2.0 * lambda_max)


# -- structure ---------------------------------------------------------------

def two_coloring(g: Graph) -> Optional[np.ndarray]:
    """BFS 2-coloring, or None when an odd cycle exists."""
    color = np.full(g.node_count, -1, dtype=int)
    for s in range(g.node_count):
        if color[s] >= 0:
            continue
        color[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(g.adjacency[u]):
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(int(v))
                elif color[v] == color[u]:
                    return None
    return color


def is_bipartite(g: Graph) -> bool:
    return two_coloring(g) is not None


def neighbor_edges(g: Graph, i: int) -> list[tuple[int, int]]:
    """Edges joining two neighbors of ``i``."""
    nb = g.neighbors(i)
    return [(u, v) for k, u in enumerate(nb) for v in nb[k + 1:] if g.adjacency[u, v]]


def neighbor_structure(g: Graph) -> list[str]:
    a = g.adjacency.astype(int)
    # (A^2 * A)[i, i] counts closed triangles through i
    triangles = np.einsum("ij,jk,ki->i", a, a, a)
    return [CONNECTED if t > 0 else SINGLETON for t in triangles]


def _subset_masks(n: int) -> np.ndarray:
    """Indicator rows of every proper subset containing node 0."""
    codes = np.arange(2 ** (n - 1), dtype=np.int64)[:-1] if n > 1 else np.zeros(0, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n - 1)) & 1
    return np.hstack([np.ones((len(codes), 1), dtype=np.int64), bits])


def conductance(g: Graph, cap: int = BRUTE_FORCE_CAP) -> float:
    """Exact min over vertex cuts of |boundary| / min(vol S, vol S^c)."""
    n = g.node_count
    if n > cap:
        raise ValueError(f"conductance brute force capped at {cap} nodes (graph has {n})")
    if n < 2 or not g.is_connected():
        raise DisconnectedGraphError("conductance needs a connected graph with at least 2 nodes")
    s = _subset_masks(n)
    a = g.adjacency.astype(np.int64)
    deg = a.sum(axis=1)
    cut = np.einsum("si,ij,sj->s", s, a, 1 - s)
    vol = s @ deg
    denom = np.minimum(vol, deg.sum() - vol)
    return float(np.min(cut / denom))


@dataclass(frozen=True)
class StructureReport:
    d_max: int
    is_bipartite: bool
    has_odd_cycle: bool
    neighbor_structure: tuple[str, ...]
    conductance: Optional[float] = None


def structure_report(g: Graph, cap: int = BRUTE_FORCE_CAP) -> StructureReport:
    bip = is_bipartite(g)
    phi = None
    if g.node_count <= cap and g.node_count >= 2 and g.is_connected():
        phi = conductance(g, cap)
    return StructureReport(
        d_max=int(g.degrees.max()),
        is_bipartite=bip,
        has_odd_cycle=not bip,
        neighbor_structure=tuple(neighbor_structure(g)),
        conductance=phi,
    )


def cheeger_bounds(g: Graph, cap: int = BRUTE_FORCE_CAP) -> tuple[float, float, float]:
    """(lambda2_norm / 2, conductance, sqrt(2 lambda2_norm)) on the normalized Laplacian."""
    phi = conductance(g, cap)
    lam2 = spectrum(normalized_laplacian(g)).lambda2
    return lam2 / 2.0, phi, math.sqrt(2.0 * max(lam2, 0.0))
