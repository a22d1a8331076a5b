import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ristopo.consensus import (CONVERGED, DIVERGED, UNDECIDED, ConsensusTrace, DelayModel, classify_stability,
                               consensus_round, decay_bound_check, default_dt, max_step, simulate_ode,
                               tolerable_staleness)
from ristopo.graph import (DisconnectedGraphError, Graph, complete_graph, cycle_graph, graph_spectrum,
                           path_graph, star_graph, tolerable_delay)

from conftest import random_connected

TAU_STAR = tolerable_delay(8.0)


def test_path_zero_delay_reaches_mean():
    g = path_graph(3)
    tr = simulate_ode(g, DelayModel(), [0.0, 3.0, 6.0], horizon=20.0)
    np.testing.assert_allclose(tr.states[-1, :, 0], 3.0, atol=1e-6)
    assert classify_stability(tr) == CONVERGED


def test_star_inside_bound_decays():
    tr = simulate_ode(star_graph(7), DelayModel.uniform(0.9 * TAU_STAR), np.arange(8.0), horizon=60.0)
    assert tr.deviation[-1] < 1e-3 * tr.deviation[0]


def test_star_outside_bound_grows():
    tr = simulate_ode(star_graph(7), DelayModel.uniform(1.1 * TAU_STAR), np.arange(8.0), horizon=100.0,
                      stop_factor=1e4)
    assert tr.deviation.max() > 1e3 * tr.deviation[0]
    assert classify_stability(tr) == DIVERGED


def test_constant_trace_converged():
    x = np.ones((2, 3, 1))
    tr = ConsensusTrace(np.array([0.0, 0.1]), x, np.ones(1), np.zeros(2), 0.1, 0.0)
    assert classify_stability(tr) == CONVERGED


def test_short_growing_trace_undecided():
    dev = np.array([1.0, 1.1, 1.2, 1.3])
    tr = ConsensusTrace(np.arange(4.0), np.zeros((4, 1, 1)), np.zeros(1), dev, 1.0, 0.0)
    assert classify_stability(tr) == UNDECIDED


def test_per_link_delays_override_uniform():
    d = DelayModel({(1, 0): 0.2}, uniform_delay=0.05)
    assert d.delay(0, 1) == 0.2 and d.delay(2, 3) == 0.05
    assert d.max_delay(path_graph(3)) == 0.2
    with pytest.raises(ValueError):
        DelayModel({(0, 1): 0.1, (1, 0): 0.2})
    with pytest.raises(ValueError):
        DelayModel(uniform_delay=-1.0)


def test_dt_guard():
    with pytest.raises(ValueError, match="dt"):
        simulate_ode(star_graph(7), DelayModel(), np.arange(8.0), dt=0.01)
    with pytest.raises(ValueError, match="horizon"):
        simulate_ode(path_graph(3), DelayModel(), np.arange(3.0), dt=1e-3, horizon=0.01)


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraphError):
        simulate_ode(Graph.from_edges(4, [(0, 1), (2, 3)]), DelayModel(), np.zeros(4))


def test_default_dt():
    assert default_dt(8.0) == pytest.approx(0.000625)
    assert default_dt(1.0, 0.005) == pytest.approx(0.0005)


def test_multicomponent_state():
    init = np.random.default_rng(0).standard_normal((5, 3))
    tr = simulate_ode(cycle_graph(5), DelayModel.uniform(0.05), init, horizon=40.0)
    np.testing.assert_allclose(tr.states[-1], np.broadcast_to(init.mean(axis=0), (5, 3)), atol=1e-5)


def test_trace_csv(tmp_path):
    tr = simulate_ode(path_graph(3), DelayModel(), [0.0, 3.0, 6.0], horizon=0.1, dt=0.001)
    tr.write_csv(tmp_path / "t.csv")
    tr.write_deviation_csv(tmp_path / "d.csv", stride=10)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "time,node_id,component_id,value" and len(lines) == 1 + 3 * len(tr)
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 1 + 11


@pytest.mark.parametrize("g", [path_graph(3), complete_graph(8), cycle_graph(8)])
def test_decay_envelope(g):
    lam2 = graph_spectrum(g).lambda2
    init = np.random.default_rng(2).standard_normal(g.node_count)
    tr = simulate_ode(g, DelayModel(), init, horizon=min(30.0, 25.0 / lam2))
    rep = decay_bound_check(tr, lam2)
    assert rep.max_ratio <= 1.001 and not rep.violated


def test_decay_consensused_start():
    tr = simulate_ode(path_graph(3), DelayModel(), [2.0, 2.0, 2.0], horizon=1.0)
    assert not decay_bound_check(tr, 1.0).violated


def test_decay_rejects_delayed_trace():
    tr = simulate_ode(path_graph(3), DelayModel.uniform(0.1), [0.0, 1.0, 2.0], horizon=1.0)
    with pytest.raises(ValueError):
        decay_bound_check(tr, 1.0)


def test_round_single_node():
    np.testing.assert_array_equal(consensus_round([[1.0, 2.0]], Graph(np.zeros((1, 1))), 0.5), [[1.0, 2.0]])


def test_round_two_nodes():
    np.testing.assert_allclose(consensus_round([0.0, 2.0], complete_graph(2), 0.5), [1.0, 1.0])


def test_round_path():
    out = consensus_round([0.0, 3.0, 6.0], path_graph(3), 0.25)
    np.testing.assert_allclose(out, [0.75, 3.0, 5.25])
    assert out.mean() == pytest.approx(3.0)


def test_round_step_guard():
    with pytest.raises(ValueError):
        consensus_round([0.0, 3.0, 6.0], path_graph(3), 0.5)


def test_round_stale_uses_old_neighbors():
    g = path_graph(3)
    x = np.array([0.0, 3.0, 6.0])
    old = np.array([1.0, 1.0, 1.0])
    np.testing.assert_allclose(consensus_round(x, g, 0.25, stale=old), x)


def test_tolerable_staleness():
    g = cycle_graph(8)
    step = max_step(g)
    s = tolerable_staleness(g, step)
    assert s >= 0
    # a smaller step tolerates at least as much staleness
    assert tolerable_staleness(g, step / 4) >= s


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10_000))
def test_round_preserves_mean(n, seed):
    rng = np.random.default_rng(seed)
    g = random_connected(rng, n)
    x = rng.standard_normal((n, 4)) * 100
    out = consensus_round(x, g, max_step(g) * rng.uniform(0.1, 1.0))
    np.testing.assert_allclose(out.mean(axis=0), x.mean(axis=0), rtol=1e-9, atol=1e-9 * np.abs(x).max())
