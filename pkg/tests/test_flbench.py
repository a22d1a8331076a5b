import numpy as np
import pytest

from ristopo.consensus import max_step
from ristopo.flbench import (MODES, VIEWS, LocalModel, assign_views, evaluate, federated_round,
                             gen_multiview_dataset, local_train, node_shards, run_fl, write_accuracy_csv)
from ristopo.graph import complete_graph, cycle_graph, fig3b_candidate, path_graph


@pytest.fixture(scope="module")
def ds():
    return gen_multiview_dataset(0)


def test_shapes(ds):
    for name in VIEWS:
        v = ds.views[name]
        assert v.x_train.shape == (875, 32) and v.x_test.shape == (375, 32)
        assert np.bincount(v.y_train, minlength=5).min() > 0


def test_noise_free_linearly_separable():
    clean = gen_multiview_dataset(1, noise=0.0)
    for v in clean.views.values():
        x = np.hstack([v.x_train, np.ones((len(v.y_train), 1))])
        w, *_ = np.linalg.lstsq(x, np.eye(5)[v.y_train], rcond=None)
        assert np.mean(np.argmax(x @ w, axis=1) == v.y_train) == 1.0


def test_same_seed_same_bytes(ds):
    assert gen_multiview_dataset(0).tobytes() == ds.tobytes()
    assert gen_multiview_dataset(1).tobytes() != ds.tobytes()


def test_single_view_between_chance_and_perfect(ds):
    v = ds.views["front"]
    m = local_train(LocalModel(32, 5, seed=0), (v.x_train, v.y_train), 20, np.random.default_rng(0))
    acc = evaluate(m, (v.x_test, v.y_test))
    assert 0.2 < acc < 1.0


def test_dataset_validation():
    with pytest.raises(ValueError):
        gen_multiview_dataset(0, n_samples=1001)
    with pytest.raises(ValueError):
        gen_multiview_dataset(0, classes=1)


def test_view_assignment():
    views = assign_views(fig3b_candidate())
    assert views[1] == "side" and views[7] == "vertical"
    assert assign_views(path_graph(5)) == {0: "front", 1: "side", 2: "back", 3: "vertical", 4: "front"}


def test_shards_disjoint(ds):
    shards = node_shards(ds, assign_views(fig3b_candidate()))
    a, b = shards[0][0], shards[4][0]  # both back-view nodes
    assert len(a) + len(b) == 875
    assert not (set(map(bytes, a)) & set(map(bytes, b)))


def test_local_train_zero_epochs(ds):
    m = LocalModel(32, 5, seed=0)
    before = m.params.copy()
    local_train(m, (ds.views["side"].x_train, ds.views["side"].y_train), 0, np.random.default_rng(0))
    assert np.array_equal(before, m.params)


def test_local_gradient_fd(ds):
    m = LocalModel(32, 5, hidden=4, seed=2)
    x, y = ds.views["side"].x_train[:16], ds.views["side"].y_train[:16]
    _, g = m.loss_grad(x, y)
    fd = np.empty(m.params.size)
    for k in range(m.params.size):
        p = m.params.copy()
        p[k] += 1e-6
        up = m.loss_grad(x, y, p)[0]
        p[k] -= 2e-6
        fd[k] = (up - m.loss_grad(x, y, p)[0]) / 2e-6
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)


def test_separable_training():
    clean = gen_multiview_dataset(3, noise=0.0)
    v = clean.views["back"]
    m = local_train(LocalModel(32, 5, seed=0), (v.x_train, v.y_train), 10, np.random.default_rng(1))
    assert evaluate(m, (v.x_train, v.y_train)) > 0.95


def test_round_none_identity():
    p = np.random.default_rng(0).standard_normal((4, 6))
    np.testing.assert_array_equal(federated_round(p, cycle_graph(4), "none", 0.2), p)


def test_round_star_average():
    v, w = np.array([1.0, 2.0]), np.array([3.0, -2.0])
    np.testing.assert_allclose(federated_round(np.stack([v, w]), complete_graph(2), "star", 0.0), [[2, 0], [2, 0]])


@pytest.mark.parametrize("mode", MODES)
def test_round_mean_preserved(mode):
    g = fig3b_candidate()
    p = np.random.default_rng(1).standard_normal((8, 50))
    out = federated_round(p, g, mode, max_step(g))
    np.testing.assert_allclose(out.mean(axis=0), p.mean(axis=0), rtol=1e-9, atol=1e-12)


def test_round_unknown_mode():
    with pytest.raises(ValueError):
        federated_round(np.zeros((2, 2)), complete_graph(2), "gossip", 0.1)


def test_evaluate_constant_predictor(ds):
    m = LocalModel(32, 5, seed=0)
    m.params = np.zeros(m.params.size)  # all logits zero: argmax picks class 0
    assert evaluate(m, ds.union_test()) == pytest.approx(1 / 5)


def test_evaluate_memorised_shard():
    clean = gen_multiview_dataset(4, noise=0.0)
    v = clean.views["vertical"]
    m = local_train(LocalModel(32, 5, seed=0), (v.x_train, v.y_train), 30, np.random.default_rng(0))
    assert evaluate(m, (v.x_train, v.y_train)) == 1.0


def test_evaluate_averaged_identical(ds):
    v = ds.views["front"]
    m = local_train(LocalModel(32, 5, seed=0), (v.x_train, v.y_train), 3, np.random.default_rng(0))
    twin = m.copy()
    twin.params = federated_round(np.stack([m.params, m.params]), complete_graph(2), "star", 0.0)[0]
    test = ds.union_test()
    assert evaluate(twin, test) == evaluate(m, test)


def test_run_fl_shapes_and_csv(tmp_path):
    small = gen_multiview_dataset(0, n_samples=1000)
    res = run_fl(small, fig3b_candidate(), "revised", rounds=2, epochs_per_round=1, staleness=1)
    assert res.accuracy.shape == (3, 8)
    write_accuracy_csv([res], tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "round,node,mode,staleness,accuracy" and len(lines) == 1 + 24


def test_run_fl_deterministic():
    small = gen_multiview_dataset(0, n_samples=1000)
    a = run_fl(small, cycle_graph(8), "ring", rounds=2, epochs_per_round=1, seed=5)
    b = run_fl(small, cycle_graph(8), "ring", rounds=2, epochs_per_round=1, seed=5)
    assert np.array_equal(a.accuracy, b.accuracy)
