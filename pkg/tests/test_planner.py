import math

import numpy as np
import pytest

from ristopo.graph import (DisconnectedGraphError, Graph, complete_graph, cycle_graph, fig3a_candidate,
                           graph_spectrum, path_graph, star_graph)
from ristopo.planner import (LinkPlan, PlannerConfig, RateThresholds, criteria_audit, exhaustive_plan,
                             greedy_plan, p1_score, plan_revision, required_rates, upper_rate)

from conftest import random_connected

CFG = PlannerConfig()


def test_p1_ring():
    # even ring: lambda_max = 4, lambda2 = 2 - sqrt(2)
    assert p1_score(cycle_graph(8), CFG) == pytest.approx(2 + math.sqrt(2), abs=1e-9)


def test_p1_star():
    assert p1_score(star_graph(7), CFG) == pytest.approx(7.0, abs=1e-9)


def test_p1_eta_zero(rng):
    g = random_connected(rng, 7)
    assert p1_score(g, PlannerConfig(eta=0.0)) == pytest.approx(graph_spectrum(g).lambda_max)


def test_p1_disconnected():
    with pytest.raises(DisconnectedGraphError):
        p1_score(Graph.from_edges(4, [(0, 1), (2, 3)]), CFG)


def test_audit_even_cycle():
    assert not criteria_audit(cycle_graph(4), CFG).odd_cycle_ok


def test_audit_platoon_triangle():
    # car 2 (node 1) sees the link between cars 1 and 3 (nodes 0 and 2)
    assert (1, (0, 2)) in criteria_audit(fig3a_candidate(), CFG).singleton_violations


def test_audit_path_diameter():
    assert criteria_audit(path_graph(3), CFG).diameter_pairs == ((0, 2, 2),)


def test_audit_degree_cap():
    aud = criteria_audit(star_graph(7), PlannerConfig(max_degree_cap=4))
    assert not aud.degree_ok and aud.worst_node == 0 and aud.worst_degree == 7


def test_plan_fixed_point():
    assert plan_revision(complete_graph(4), CFG).is_empty()


def test_plan_path_closes_triangle():
    cfg = PlannerConfig(max_degree_cap=2)
    g = path_graph(3)
    plan = plan_revision(g, cfg)
    assert plan == LinkPlan(construct=frozenset({(0, 2)}))
    assert p1_score(g, cfg) == pytest.approx(2.0)
    assert p1_score(plan.apply(g), cfg) == pytest.approx(0.0, abs=1e-9)


def test_plan_platoon_improves():
    g = fig3a_candidate()
    plan = plan_revision(g, CFG)
    h = plan.apply(g)
    assert h.is_connected()
    assert p1_score(h, CFG) < p1_score(g, CFG)
    assert h.degrees.max() <= CFG.max_degree_cap


@pytest.mark.parametrize("seed", range(5))
def test_greedy_vs_exhaustive_small(seed):
    g = random_connected(np.random.default_rng(seed), 5)
    cfg = PlannerConfig(edit_budget=2)
    best = exhaustive_plan(g, cfg).apply(g)
    got = greedy_plan(g, cfg).apply(g)
    assert p1_score(got, cfg) == pytest.approx(p1_score(best, cfg), abs=1e-9)


def test_exhaustive_cap():
    with pytest.raises(ValueError):
        exhaustive_plan(path_graph(9), PlannerConfig(brute_force_cap=7))


def test_linkplan_text_roundtrip(tmp_path):
    plan = LinkPlan(frozenset({(6, 2), (1, 5)}), frozenset({(2, 0)}))
    assert plan.to_text() == "C 1 5\nC 2 6\nD 0 2\n"
    plan.write(tmp_path / "p.txt")
    assert LinkPlan.read(tmp_path / "p.txt") == plan


def test_linkplan_rejects_overlap():
    with pytest.raises(ValueError):
        LinkPlan(frozenset({(0, 1)}), frozenset({(1, 0)}))


def test_linkplan_bad_text():
    with pytest.raises(ValueError, match="line 2"):
        LinkPlan.from_text("C 0 1\nX 1 2\n")


def test_linkplan_validate_against():
    g = path_graph(3)
    LinkPlan(frozenset({(0, 2)})).validate_against(g)
    with pytest.raises(ValueError):
        LinkPlan(frozenset({(0, 1)})).validate_against(g)
    with pytest.raises(ValueError):
        LinkPlan(deconstruct=frozenset({(0, 2)})).validate_against(g)


def test_required_rates_star_volume():
    thr = RateThresholds.for_graph(1e6, 8.0, 1e5)
    assert thr.r_upper == pytest.approx(5.0930e6, rel=1e-4)
    req = required_rates(LinkPlan(frozenset({(0, 1)}), frozenset({(2, 3)})), 8.0, thr)
    assert req[(0, 1)] == ("min", pytest.approx(5.0930e6, rel=1e-4))
    assert req[(2, 3)] == ("max", 1e5)


def test_required_rates_model_volume():
    lam = math.pi / (2 * 0.2901)
    assert upper_rate(52.0e6, lam) == pytest.approx(1.7925e8, rel=1e-4)


def test_required_rates_empty():
    assert required_rates(LinkPlan(), 8.0, RateThresholds.for_graph(1e6, 8.0, 1e5)) == {}


def test_thresholds_order():
    with pytest.raises(ValueError):
        RateThresholds(1.0, 2.0, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(eta=-1)
    with pytest.raises(ValueError):
        PlannerConfig(max_degree_cap=1)
