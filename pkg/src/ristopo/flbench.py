"""Synthetic multi-view classification shared over a vehicle graph.

Each class has a latent vector; a view sees it through its own fixed linear
map plus Gaussian noise. Nodes train a tiny classifier on one view and
periodically average parameters with their neighbours.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .consensus import consensus_round, max_step, tolerable_staleness
from .graph import Graph
from .nets import MLP

VIEWS = ("front", "side", "back", "vertical")
# node index (0-based) -> view, for the eight-car layout
EIGHT_CAR_VIEWS = ("back", "side", "front", "vertical", "back", "side", "front", "vertical")
MODES = ("revised", "initial", "star", "ring", "none")


@dataclass
class ViewData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


@dataclass
class MultiViewDataset:
    views: dict
    classes: int
    dim: int

    def union_test(self) -> tuple[np.ndarray, np.ndarray]:
        xs = [v.x_test for v in self.views.values()]
        ys = [v.y_test for v in self.views.values()]
        return np.concatenate(xs), np.concatenate(ys)

    def tobytes(self) -> bytes:
        parts = []
        for name in VIEWS:
            v = self.views[name]
            parts += [v.x_train.tobytes(), v.y_train.tobytes(), v.x_test.tobytes(), v.y_test.tobytes()]
        return b"".join(parts)


def gen_multiview_dataset(seed, n_samples: int = 5000, dim: int = 32, classes: int = 5,
                          noise: float = 2.0, latent_dim: int = 8, train_frac: float = 0.7) -> MultiViewDataset:
    if classes < 2 or dim < 1 or latent_dim < 1:
        raise ValueError("need classes >= 2, dim >= 1, latent_dim >= 1")
    if n_samples <= 0 or n_samples % (classes * len(VIEWS)):
        raise ValueError(f"n_samples must be a positive multiple of classes*views = {classes * len(VIEWS)}")
    if noise < 0 or not 0 < train_frac < 1:
        raise ValueError("noise must be >= 0 and train_frac in (0, 1)")
    rng = np.random.default_rng(seed)
    latents = rng.standard_normal((classes, latent_dim))
    per_class = n_samples // (classes * len(VIEWS))
    views = {}
    for name in VIEWS:
        A = rng.standard_normal((latent_dim, dim)) / math.sqrt(latent_dim)
        y = np.repeat(np.arange(classes), per_class)
        x = latents[y] @ A + noise * rng.standard_normal((y.size, dim)) / math.sqrt(dim) * math.sqrt(latent_dim)
        # stratified split keeps every test set class-balanced
        n_train = int(round(train_frac * per_class))
        picks = [c * per_class + rng.permutation(per_class) for c in range(classes)]
        tr = rng.permutation(np.concatenate([p[:n_train] for p in picks]))
        te = rng.permutation(np.concatenate([p[n_train:] for p in picks]))
        views[name] = ViewData(x[tr], y[tr], x[te], y[te])
    return MultiViewDataset(views, classes, dim)


def assign_views(g: Graph) -> dict:
    n = g.node_count
    if n == 8:
        return {i: EIGHT_CAR_VIEWS[i] for i in range(n)}
    return {i: VIEWS[i % len(VIEWS)] for i in range(n)}


def node_shards(ds: MultiViewDataset, views: dict) -> dict:
    """Split each view's training set disjointly among the nodes that hold it."""
    holders: dict = {}
    for node in sorted(views):
        holders.setdefault(views[node], []).append(node)
    shards = {}
    for view, nodes in holders.items():
        v = ds.views[view]
        for k, node in enumerate(nodes):
            idx = np.arange(k, v.y_train.size, len(nodes))
            shards[node] = (v.x_train[idx], v.y_train[idx])
    return shards


class LocalModel:
    """One-hidden-layer softmax classifier over a flat parameter vector."""

    def __init__(self, dim: int, classes: int, hidden: int = 16, seed=0, lr: float = 0.005, batch: int = 32):
        self.net = MLP((dim, hidden, classes), np.random.default_rng(seed))
        self.lr, self.batch = lr, batch

    @property
    def params(self) -> np.ndarray:
        return self.net.params

    @params.setter
    def params(self, value):
        self.net.params[:] = value

    def copy(self) -> "LocalModel":
        twin = object.__new__(LocalModel)
        twin.net, twin.lr, twin.batch = self.net.copy(), self.lr, self.batch
        return twin

    def predict(self, x) -> np.ndarray:
        if not np.all(np.isfinite(self.params)):
            return np.zeros(len(x), dtype=int)  # a blown-up model answers one fixed class
        return np.argmax(self.net(x), axis=1)

    def loss_grad(self, x, y, params=None):
        logits, acts = self.net.forward(x, params)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = len(y)
        loss = -float(np.mean(logp[np.arange(n), y]))
        if params is not None:
            return loss, None
        d = np.exp(logp)
        d[np.arange(n), y] -= 1.0
        grad, _ = self.net.backward(acts, d / n)
        return loss, grad


def local_train(model: LocalModel, shard, epochs: int, rng) -> LocalModel:
    x, y = shard
    if len(y) == 0:
        raise ValueError("empty shard")
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), model.batch):
            idx = order[start:start + model.batch]
            _, g = model.loss_grad(x[idx], y[idx])
            model.net.params -= model.lr * g
    return model


def evaluate(model: LocalModel, testset) -> float:
    x, y = testset
    if len(y) == 0:
        raise ValueError("empty test set")
    return float(np.mean(model.predict(x) == y))


def federated_round(params: np.ndarray, g: Optional[Graph], mode: str, sharing_step: float,
                    stale: Optional[np.ndarray] = None) -> np.ndarray:
    """Aggregate stacked node parameters (nodes x P) once."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    params = np.asarray(params, dtype=float)
    if mode == "none":
        return params.copy()
    if mode == "star":
        return np.broadcast_to(params.mean(axis=0), params.shape).copy()
    return consensus_round(params, g, sharing_step, stale=stale)


@dataclass
class FlResult:
    mode: str
    staleness: int
    sharing_step: float
    accuracy: np.ndarray  # (rounds + 1, nodes)
    rows: list = field(default_factory=list)

    @property
    def final_mean(self) -> float:
        return float(np.mean(self.accuracy[-1]))


def run_fl(ds: MultiViewDataset, g: Graph, mode: str, rounds: int = 10, epochs_per_round: int = 10,
           staleness: int = 0, sharing_step: Optional[float] = None, hidden: int = 16,
           lr: float = 0.005, batch: int = 32, seed=0) -> FlResult:
    """Alternate local epochs with one sharing round; accuracy on every view's test set."""
    views = assign_views(g)
    shards = node_shards(ds, views)
    n = g.node_count
    step = max_step(g) if sharing_step is None else sharing_step
    base = LocalModel(ds.dim, ds.classes, hidden, seed=[seed, 11], lr=lr, batch=batch)
    models = [base.copy() for _ in range(n)]
    rngs = [np.random.default_rng([seed, 13, i]) for i in range(n)]
    test = ds.union_test()
    history = [np.stack([m.params.copy() for m in models])]
    acc = [[evaluate(m, test) for m in models]]
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(rounds):
            for i, m in enumerate(models):
                if np.all(np.isfinite(m.params)):
                    local_train(m, shards[i], epochs_per_round, rngs[i])
            stacked = np.stack([m.params for m in models])
            stale = history[max(0, len(history) - staleness)] if staleness else None
            history.append(stacked.copy())
            mixed = federated_round(stacked, g, mode, step, stale=stale)
            for m, p in zip(models, mixed):
                m.params = p
            acc.append([evaluate(m, test) for m in models])
    accuracy = np.array(acc)
    rows = [(r, i, mode, float(a)) for r, row in enumerate(accuracy) for i, a in enumerate(row)]
    return FlResult(mode, staleness, step, accuracy, rows)


def write_accuracy_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "node", "mode", "staleness", "accuracy"])
        for res in results:
            for r, i, mode, a in res.rows:
                w.writerow([r, i, mode, res.staleness, repr(a)])


__all__ = [
    "VIEWS", "MODES", "MultiViewDataset", "ViewData", "LocalModel", "FlResult",
    "gen_multiview_dataset", "assign_views", "node_shards", "local_train", "evaluate",
    "federated_round", "run_fl", "write_accuracy_csv", "tolerable_staleness",
]
