"""Score, audit and revise platoon topologies by link construction and deconstruction."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .graph import (
    DisconnectedGraphError,
    Graph,
    build_laplacian,
    graph_spectrum,
    is_bipartite,
    neighbor_edges,
    tolerable_delay,
)
from .jacobi import jacobi_eigh

SCORE_TOL = 1e-9

Edge = tuple[int, int]


@dataclass(frozen=True)
class PlannerConfig:
    eta: float = 1.0
    max_degree_cap: int = 4
    brute_force_cap: int = 7
    edit_budget: int = 4
    lookahead: int = 2

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.max_degree_cap < 2:
            raise ValueError(f"max_degree_cap must be >= 2, got {self.max_degree_cap}")
        if self.edit_budget < 0:
            raise ValueError(f"edit_budget must be >= 0, got {self.edit_budget}")
        if self.lookahead < 1:
            raise ValueError(f"lookahead must be >= 1, got {self.lookahead}")


def _norm(e: Iterable[int]) -> Edge:
    u, v = e
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class LinkPlan:
    construct: frozenset = field(default_factory=frozenset)
    deconstruct: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        c = frozenset(_norm(e) for e in self.construct)
        d = frozenset(_norm(e) for e in self.deconstruct)
        if c & d:
            raise ValueError(f"pairs both constructed and deconstructed: {sorted(c & d)}")
        object.__setattr__(self, "construct", c)
        object.__setattr__(self, "deconstruct", d)

    def __len__(self):
        return len(self.construct) + len(self.deconstruct)

    def is_empty(self) -> bool:
        return len(self) == 0

    def apply(self, g: Graph) -> Graph:
        return g.edit(add=self.construct, remove=self.deconstruct)

    def validate_against(self, g: Graph) -> None:
        for u, v in self.construct:
            if g.has_edge(u, v):
                raise ValueError(f"construct pair ({u}, {v}) already linked")
        for u, v in self.deconstruct:
            if not g.has_edge(u, v):
                raise ValueError(f"deconstruct pair ({u}, {v}) is not a link")

    def links(self) -> list[tuple[str, Edge]]:
        """Plan entries as ("C"|"D", pair) in a fixed order."""
        return [("C", e) for e in sorted(self.construct)] + [("D", e) for e in sorted(self.deconstruct)]

    def to_text(self) -> str:
        return "".join(f"{kind} {u} {v}\n" for kind, (u, v) in self.links())

    @classmethod
    def from_text(cls, text: str) -> "LinkPlan":
        construct, deconstruct = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("C", "D"):
                raise ValueError(f"line {lineno}: expected 'C u v' or 'D u v', got {raw!r}")
            (construct if parts[0] == "C" else deconstruct).append((int(parts[1]), int(parts[2])))
        return cls(frozenset(construct), frozenset(deconstruct))

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "LinkPlan":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class RateThresholds:
    """Rate targets; ``r_upper`` is 2*Lambda*lambda_max/pi for the revised graph."""

    r_upper: float
    r_lower: float
    traffic_volume: float

    def __post_init__(self):
        if not self.r_upper > self.r_lower >= 0:
            raise ValueError(f"need r_upper > r_lower >= 0, got {self.r_upper}, {self.r_lower}")

    @classmethod
    def for_graph(cls, traffic_volume: float, lambda_max: float, r_lower: float) -> "RateThresholds":
        return cls(upper_rate(traffic_volume, lambda_max), r_lower, traffic_volume)


def upper_rate(traffic_volume: float, lambda_max: float) -> float:
    return 2.0 * traffic_volume * lambda_max / math.pi


@dataclass(frozen=True)
class CriteriaAudit:
    degree_ok: bool
    worst_node: int
    worst_degree: int
    odd_cycle_ok: bool
    diameter_pairs: tuple[tuple[int, int, int], ...]
    singleton_violations: tuple[tuple[int, Edge], ...]

    @property
    def all_ok(self) -> bool:
        return self.degree_ok and self.odd_cycle_ok and not self.singleton_violations


def _require_connected(g: Graph) -> None:
    if not g.is_connected():
        raise DisconnectedGraphError("graph is disconnected (lambda2 = 0)")


def p1_score(g: Graph, cfg: PlannerConfig) -> float:
    """lambda_max - eta * lambda2 of the Laplacian."""
    _require_connected(g)
    s = graph_spectrum(g)
    return s.lambda_max - cfg.eta * s.lambda2


def singleton_violations(g: Graph) -> list[tuple[int, Edge]]:
    return [(i, e) for i in range(g.node_count) for e in neighbor_edges(g, i)]


def diameter_pairs(g: Graph) -> list[tuple[int, int, int]]:
    d = g.distance_matrix()
    far = int(d.max())
    n = g.node_count
    return [(u, v, far) for u in range(n) for v in range(u + 1, n) if d[u, v] == far and far > 0]


def criteria_audit(g: Graph, cfg: PlannerConfig) -> CriteriaAudit:
    _require_connected(g)
    deg = g.degrees
    worst = int(np.argmax(deg))
    return CriteriaAudit(
        degree_ok=bool(deg.max() <= cfg.max_degree_cap),
        worst_node=worst,
        worst_degree=int(deg[worst]),
        odd_cycle_ok=not is_bipartite(g),
        diameter_pairs=tuple(diameter_pairs(g)),
        singleton_violations=tuple(singleton_violations(g)),
    )


# -- planning ----------------------------------------------------------------

def _triangle_edges(g: Graph) -> set[Edge]:
    a = g.adjacency.astype(int)
    common = (a @ a) * a
    iu, ju = np.nonzero(np.triu(common, 1))
    return {(int(u), int(v)) for u, v in zip(iu, ju)}


@dataclass
class _Baseline:
    """Reference quantities of the graph being revised."""

    g: Graph
    cfg: PlannerConfig
    score: float
    degree_limit: np.ndarray
    violation_count: int
    far_pairs: list[Edge]

    @classmethod
    def of(cls, g: Graph, cfg: PlannerConfig) -> "_Baseline":
        return cls(
            g=g,
            cfg=cfg,
            score=p1_score(g, cfg),
            # nodes already above the cap may only shed links
            degree_limit=np.maximum(cfg.max_degree_cap, g.degrees),
            violation_count=len(singleton_violations(g)),
            far_pairs=[(u, v) for u, v, _ in diameter_pairs(g)],
        )

    def progress(self, h: Graph) -> bool:
        linked = sum(h.has_edge(u, v) for u, v in self.far_pairs)
        return len(singleton_violations(h)) < self.violation_count or linked > 0

    def admissible(self, h: Graph) -> bool:
        return h.is_connected() and bool(np.all(h.degrees <= self.degree_limit))

    def final_ok(self, h: Graph, score: float) -> bool:
        return score < self.score - SCORE_TOL and not is_bipartite(h) and self.progress(h)


def _score_batch(graphs: list[Graph], cfg: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    if not graphs:
        return np.zeros(0), np.zeros(0)
    w = jacobi_eigh(np.stack([build_laplacian(h) for h in graphs]))
    return w[:, -1] - cfg.eta * w[:, 1], w[:, 1]


def _rank_key(score: float, lam2: float, h: Graph, edits: tuple) -> tuple:
    return (round(score / SCORE_TOL) if math.isfinite(score) else math.inf, -round(lam2 / SCORE_TOL), int(h.degrees.max()), edits)


def _edit_tuple(plan_add, plan_remove) -> tuple:
    return tuple(sorted(("C",) + e for e in plan_add)) + tuple(sorted(("D",) + e for e in plan_remove))


def _edit_sets(g: Graph, current: Graph, added: list[Edge], removed: list[Edge], size: int):
    """Edit sets of 1..size links applicable to ``current``.

    Additions range over unlinked pairs not removed earlier; removals over
    original links of ``g`` that close a triangle once the additions are in.
    """
    original = set(g.edges())
    non_edges = [e for e in current.non_edges() if e not in removed]
    for k_add in range(size + 1):
        for adds in itertools.combinations(non_edges, k_add):
            grown = current.edit(add=adds) if adds else current
            removable = sorted(e for e in _triangle_edges(grown) if e in original and e not in added)
            for k_rem in range(size - k_add + 1):
                if k_add + k_rem == 0:
                    continue
                for rems in itertools.combinations(removable, k_rem):
                    yield grown.edit(remove=rems) if rems else grown, adds, rems


def _search(g: Graph, cfg: PlannerConfig, budget: int, lookahead: int) -> LinkPlan:
    base = _Baseline.of(g, cfg)
    dist = g.distance_matrix()
    added: list[Edge] = []
    removed: list[Edge] = []
    current, current_score = g, base.score
    best = None
    spent = 0
    while spent < budget:
        size = min(lookahead, budget - spent)
        cands = [c for c in _edit_sets(g, current, added, removed, size) if base.admissible(c[0])]
        if not cands:
            break
        choice = None
        for start in range(0, len(cands), 4096):
            part = cands[start:start + 4096]
            scores, lam2 = _score_batch([c[0] for c in part], cfg)
            for (h, adds, rems), sc, l2 in zip(part, scores, lam2):
                a, r = added + list(adds), removed + list(rems)
                reach = -sum(int(dist[e]) for e in adds)
                key = (0 if base.final_ok(h, sc) else 1,) + _rank_key(sc, l2, h, (reach, _edit_tuple(a, r)))
                if choice is None or key < choice[0]:
                    choice = (key, h, a, r, sc)
        key, h, a, r, sc = choice
        if sc >= current_score - SCORE_TOL:
            break
        current, added, removed, current_score = h, a, r, sc
        spent = len(added) + len(removed)
        if key[0] == 0 and (best is None or key[1:] < best[0]):
            best = (key[1:], list(added), list(removed))
    if best is None:
        return LinkPlan()
    return LinkPlan(frozenset(best[1]), frozenset(best[2]))


def greedy_plan(g: Graph, cfg: PlannerConfig, budget: Optional[int] = None, lookahead: Optional[int] = None) -> LinkPlan:
    """Steepest descent over compound moves of at most ``lookahead`` link edits.

    Every candidate keeps the graph connected and within the degree cap. A move
    is committed only when it lowers the P1 score; candidates whose result
    already has an odd cycle and progress on the singleton/diameter criteria
    are preferred, then lower score, larger lambda2, smaller d_max, longer
    BFS reach of added links and lexicographic edit order. The best feasible
    state visited is returned (empty plan when there is none).
    """
    budget = cfg.edit_budget if budget is None else budget
    lookahead = cfg.lookahead if lookahead is None else lookahead
    return _search(g, cfg, budget, max(1, lookahead))


def exhaustive_plan(g: Graph, cfg: PlannerConfig, budget: Optional[int] = None) -> LinkPlan:
    """Best feasible plan over every edit set of at most ``budget`` links."""
    if g.node_count > cfg.brute_force_cap:
        raise ValueError(f"exhaustive planning capped at {cfg.brute_force_cap} nodes")
    budget = cfg.edit_budget if budget is None else budget
    return _search(g, cfg, budget, max(1, budget))


def plan_revision(g: Graph, cfg: PlannerConfig) -> LinkPlan:
    """Construct/deconstruct plan that lowers the P1 score of ``g``."""
    _require_connected(g)
    return greedy_plan(g, cfg)


def required_rates(plan: LinkPlan, lambda_max_revised: float, thresholds: RateThresholds) -> dict:
    """Per-link rate targets: ("min", R_upper) for constructs, ("max", R_lower) for deconstructs."""
    r_upper = thresholds.traffic_volume / tolerable_delay(lambda_max_revised)
    targets = {}
    for kind, e in plan.links():
        targets[e] = ("min", r_upper) if kind == "C" else ("max", thresholds.r_lower)
    return targets
