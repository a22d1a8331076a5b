"""Delayed neighbor-averaging dynamics.

Two readings of the aggregation protocol live here: a continuous-time delayed
ODE ``dv_i/dt = sum_j a_ij [v_j(t - tau_ij) - v_i(t - tau_ij)]`` integrated
with explicit Euler, and a step-scaled discrete round used between local
training epochs.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .graph import Graph, build_laplacian, graph_spectrum, DisconnectedGraphError

log = logging.getLogger(__name__)

CONVERGED_FACTOR = 1e-6
DIVERGED_FACTOR = 1e3
DECAY_SLACK = 1e-3
GROWTH_FACTOR = 2.0

CONVERGED = "converged"
DIVERGED = "diverged"
UNDECIDED = "undecided"


@dataclass(frozen=True)
class DelayModel:
    """Per-link delays in seconds; ``uniform_delay`` applies to links not listed."""

    per_link_delay: Mapping[tuple[int, int], float] = field(default_factory=dict)
    uniform_delay: Optional[float] = None

    def __post_init__(self):
        norm = {}
        for (i, j), tau in dict(self.per_link_delay).items():
            if tau < 0:
                raise ValueError(f"negative delay {tau} on link ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in norm and norm[key] != tau:
                raise ValueError(f"asymmetric delay on link {key}: {norm[key]} vs {tau}")
            norm[key] = float(tau)
        if self.uniform_delay is not None and self.uniform_delay < 0:
            raise ValueError(f"negative uniform delay {self.uniform_delay}")
        object.__setattr__(self, "per_link_delay", norm)

    @classmethod
    def uniform(cls, tau: float) -> "DelayModel":
        return cls(uniform_delay=tau)

    def delay(self, i: int, j: int) -> float:
        key = (min(i, j), max(i, j))
        if key in self.per_link_delay:
            return self.per_link_delay[key]
        return self.uniform_delay or 0.0

    def link_delays(self, g: Graph) -> dict[tuple[int, int], float]:
        return {e: self.delay(*e) for e in g.edges()}

    def max_delay(self, g: Graph) -> float:
        return max(self.link_delays(g).values(), default=0.0)

    def min_positive_delay(self, g: Graph) -> Optional[float]:
        pos = [t for t in self.link_delays(g).values() if t > 0]
        return min(pos) if pos else None


@dataclass
class ConsensusTrace:
    times: np.ndarray
    states: np.ndarray  # (steps, nodes, components)
    initial_mean: np.ndarray
    deviation: np.ndarray
    dt: float
    max_delay: float
    converged_factor: float = CONVERGED_FACTOR
    diverged_factor: float = DIVERGED_FACTOR

    def __len__(self):
        return len(self.times)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "node_id", "component_id", "value"])
            for t, state in zip(self.times, self.states):
                for i, row in enumerate(state):
                    for c, x in enumerate(row):
                        w.writerow([f"{t:.9g}", i, c, repr(float(x))])

    def write_deviation_csv(self, path, stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "deviation"])
            for t, d in zip(self.times[::stride], self.deviation[::stride]):
                w.writerow([f"{t:.9g}", repr(float(d))])


def deviation_norm(states: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Euclidean norm of the stacked per-node deviations from ``mean``."""
    diff = states - mean
    return np.sqrt(np.sum(diff * diff, axis=tuple(range(1, states.ndim))))


def default_dt(lambda_max: float, min_delay: Optional[float] = None) -> float:
    dt = min(1e-3, 0.005 / lambda_max)
    if min_delay:
        dt = min(dt, min_delay / 10.0)
    return dt


def _as_states(init, n: int) -> np.ndarray:
    x = np.asarray(init, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != n:
        raise ValueError(f"need one initial vector per node ({n}), got {x.shape[0]}")
    return x


def simulate_ode(
    g: Graph,
    delays: DelayModel,
    init,
    dt: Optional[float] = None,
    horizon: float = 100.0,
    stop_factor: Optional[float] = None,
) -> ConsensusTrace:
    """Euler-integrate the delayed protocol with constant pre-history.

    ``stop_factor`` ends the run early once the deviation exceeds that multiple
    of its initial value (a sweep needs no more evidence of divergence).
    """
    if not g.is_connected():
        raise DisconnectedGraphError("consensus simulation needs a connected graph")
    lam_max = graph_spectrum(g).lambda_max
    min_delay = delays.min_positive_delay(g)
    if dt is None:
        dt = default_dt(lam_max, min_delay)
    limit = 0.01 / lam_max
    if min_delay:
        limit = min(limit, min_delay / 10.0)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} too large: need dt <= {limit:.4g} (Euler stability and delay resolution)")
    if horizon < 50 * dt:
        raise ValueError(f"horizon {horizon} shorter than 50 steps of dt={dt}")

    x0 = _as_states(init, g.node_count)
    steps = int(round(horizon / dt))
    # one Laplacian per distinct lag (in steps)
    by_lag: dict[int, np.ndarray] = {}
    for (i, j), tau in delays.link_delays(g).items():
        lag = max(0, math.ceil(tau / dt - 1e-9))
        L = by_lag.setdefault(lag, np.zeros((g.node_count, g.node_count)))
        L[i, j] -= 1.0
        L[j, i] -= 1.0
        L[i, i] += 1.0
        L[j, j] += 1.0
    lags = sorted(by_lag.items())

    states = np.empty((steps + 1,) + x0.shape)
    states[0] = x0
    mean = x0.mean(axis=0)
    dev0 = float(deviation_norm(x0[None], mean)[0])
    bound = None if stop_factor is None else stop_factor * max(dev0, 1e-300)
    last = steps
    for k in range(steps):
        drift = np.zeros_like(x0)
        for lag, L in lags:
            drift -= L @ states[max(k - lag, 0)]
        states[k + 1] = states[k] + dt * drift
        if bound is not None and not np.all(np.abs(states[k + 1]) < 1e300):
            last = k + 1
            break
        if bound is not None and (k & 255) == 0:
            d = float(deviation_norm(states[k + 1][None], mean)[0])
            if d > bound:
                last = k + 1
                break
    states = states[: last + 1]
    times = np.arange(last + 1) * dt
    trace = ConsensusTrace(
        times=times,
        states=states,
        initial_mean=mean,
        deviation=deviation_norm(states, mean),
        dt=dt,
        max_delay=delays.max_delay(g),
    )
    log.debug("consensus run dt=%g steps=%d thresholds converged<%g diverged>%g",
              dt, last, CONVERGED_FACTOR, DIVERGED_FACTOR)
    return trace


def classify_stability(trace: ConsensusTrace) -> str:
    if len(trace) == 0:
        raise ValueError("empty trace")
    dev = trace.deviation
    d0 = float(dev[0])
    if not np.all(np.isfinite(dev)) or (d0 > 0 and np.any(dev > trace.diverged_factor * d0)):
        return DIVERGED
    if dev[-1] < trace.converged_factor * max(1.0, d0):
        return CONVERGED
    # slow blow-up just past the boundary: above the start and still growing
    q = len(dev) // 4
    if q >= 2 and dev[-1] > d0 and dev[-q:].max() > GROWTH_FACTOR * dev[-2 * q:-q].max():
        return DIVERGED
    return UNDECIDED


@dataclass(frozen=True)
class DecayReport:
    max_ratio: float
    worst_time: float
    violated: bool


def decay_bound_check(trace: ConsensusTrace, lambda2: float, slack: float = DECAY_SLACK) -> DecayReport:
    """Compare a delay-free trace with ||eps(0)|| exp(-lambda2 t)."""
    if trace.max_delay > 0:
        raise ValueError("the exponential envelope is only claimed for delay-free runs")
    d0 = float(trace.deviation[0])
    if d0 == 0.0:
        return DecayReport(0.0, 0.0, False)
    envelope = d0 * np.exp(-lambda2 * trace.times)
    # once the deviation reaches round-off level the comparison is meaningless
    scale = float(np.max(np.abs(trace.states[0]))) + float(np.max(np.abs(trace.initial_mean)))
    floor = 1e3 * np.finfo(float).eps * scale * math.sqrt(trace.states[0].size)
    ok = trace.deviation > floor
    if not ok.any():
        return DecayReport(0.0, 0.0, False)
    ratio = trace.deviation[ok] / envelope[ok]
    i = int(np.argmax(ratio))
    worst = float(ratio[i])
    return DecayReport(worst, float(trace.times[ok][i]), worst > 1.0 + slack)


def max_step(g: Graph) -> float:
    return 1.0 / (int(g.degrees.max()) + 1)


def consensus_round(params, g: Graph, step: float, stale=None) -> np.ndarray:
    """One neighbor-averaging round ``v_i += step * sum_j (v_j - v_i)``.

    With ``stale`` given, neighbor differences are taken on those older
    parameters while each node keeps its own current vector as the base.
    """
    x = np.asarray(params, dtype=float)
    limit = max_step(g)
    if not 0 < step <= limit * (1 + 1e-12):
        raise ValueError(f"step {step} outside (0, 1/(d_max+1)] = (0, {limit:.4g}]")
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    old = x if stale is None else np.asarray(stale, dtype=float).reshape(x.shape)
    L = build_laplacian(g)
    out = x - step * (L @ old)
    return out[:, 0] if squeeze else out


def tolerable_staleness(g: Graph, step: float, max_rounds: int = 64) -> int:
    """Largest staleness s (rounds) for which the stale round stays stable.

    Mode lambda evolves as z^(s+1) - z^s + step*lambda = 0; all roots must lie
    strictly inside the unit circle for every non-zero Laplacian eigenvalue.
    Returns -1 when even fresh rounds are unstable.
    """
    lams = [lam for lam in graph_spectrum(g).eigenvalues if lam > 1e-9]
    best = -1
    for s in range(max_rounds + 1):
        for lam in lams:
            coeffs = np.zeros(s + 2)
            coeffs[0], coeffs[1] = 1.0, -1.0
            coeffs[-1] += step * lam
            if np.max(np.abs(np.roots(coeffs))) >= 1.0 - 1e-12:
                return best
        best = s
    return best
