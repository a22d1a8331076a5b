"""Small dense networks with hand-written backpropagation."""
from __future__ import annotations

import numpy as np


class MLP:
    """tanh hidden layers, linear output. Parameters live in one flat vector."""

    def __init__(self, sizes, rng, out_scale: float | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self.shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self.shapes += [(fan_in, fan_out), (fan_out,)]
        self.size = sum(int(np.prod(s)) for s in self.shapes)
        self.params = np.empty(self.size)
        self._cache = (None, None)
        views = self._views(self.params)
        n_layers = len(self.sizes) - 1
        for k in range(n_layers):
            bound = 1.0 / np.sqrt(self.sizes[k])
            if k == n_layers - 1 and out_scale is not None:
                bound = out_scale
            views[2 * k][...] = rng.uniform(-bound, bound, self.shapes[2 * k])
            views[2 * k + 1][...] = rng.uniform(-bound, bound, self.shapes[2 * k + 1])

    def _views(self, flat):
        if flat is self._cache[0]:
            return self._cache[1]
        views = self._split(flat)
        if flat is self.params:
            self._cache = (flat, views)
        return views

    def _split(self, flat):
        out, i = [], 0
        for s in self.shapes:
            n = s[0] * s[1] if len(s) == 2 else s[0]
            out.append(flat[i:i + n].reshape(s))
            i += n
        return out

    def copy(self) -> "MLP":
        twin = object.__new__(MLP)
        twin.sizes, twin.shapes, twin.size = self.sizes, list(self.shapes), self.size
        twin.params = self.params.copy()
        twin._cache = (None, None)
        return twin

    def forward(self, x, params=None):
        """Return the output and the activation cache needed by ``backward``."""
        w = self._views(self.params if params is None else params)
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        n_layers = len(self.sizes) - 1
        for k in range(n_layers):
            h = h @ w[2 * k] + w[2 * k + 1]
            if k < n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. params (flat) and input."""
        w = self._views(self.params)
        grads = np.empty(self.size)
        gv = self._split(grads)
        n_layers = len(self.sizes) - 1
        delta = np.asarray(grad_out, dtype=float)
        for k in reversed(range(n_layers)):
            if k < n_layers - 1:
                delta = delta * (1.0 - acts[k + 1] ** 2)
            gv[2 * k][...] = acts[k].T @ delta
            gv[2 * k + 1][...] = delta.sum(axis=0)
            delta = delta @ w[2 * k].T
        return grads, delta


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        """In-place descent step on ``params``."""
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * (grad * grad)
        step_size = self.lr * np.sqrt(1 - self.b2 ** self.t) / (1 - self.b1 ** self.t)
        denom = np.sqrt(self.v)
        denom += self.eps * np.sqrt(1 - self.b2 ** self.t)
        params -= step_size * (self.m / denom)

    def state(self) -> np.ndarray:
        return np.concatenate([[self.t], self.m, self.v])
