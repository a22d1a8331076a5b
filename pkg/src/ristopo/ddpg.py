"""Actor-critic phase-shift controller for link construction/deconstruction.

The environment is one frozen channel draw per episode. An action is a
unit-modulus phase vector; the reward pays for constructive-link rate,
charges for deconstructive-link rate, and penalises missed targets.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (ChannelParams, ChannelSet, Geometry, PhaseShiftVector,
                      direct_control, project_unit, rate_from_gain, sample_channels)
from .nets import MLP, Adam
from .planner import LinkPlan, RateThresholds

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- state / reward

@dataclass(frozen=True)
class MdpState:
    normalized_rates: np.ndarray
    prev_phase: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.normalized_rates, self.prev_phase])


def interleave(phi: PhaseShiftVector) -> np.ndarray:
    c = phi.coefficients
    out = np.empty(2 * c.size)
    out[0::2], out[1::2] = c.real, c.imag
    return out


def deinterleave(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[..., 0::2] + 1j * v[..., 1::2]


def decode_phase(prev_phase) -> PhaseShiftVector:
    return PhaseShiftVector(deinterleave(prev_phase))


def encode_state(rates, prev: PhaseShiftVector, bounds: tuple[float, float]) -> MdpState:
    lo, hi = bounds
    if not hi > lo:
        raise ValueError(f"rate bounds need max > min, got {bounds}")
    r = (np.asarray(rates, dtype=float) - lo) / (hi - lo)
    return MdpState(np.clip(r, 0.0, 1.0), interleave(prev))


@dataclass(frozen=True)
class RewardConfig:
    gamma_penalty: float
    thresholds: RateThresholds
    plan: LinkPlan
    rate_unit: float = 1.0  # rates are divided by this before scoring

    def __post_init__(self):
        if self.gamma_penalty < 0:
            raise ValueError("gamma_penalty must be >= 0")
        if self.rate_unit <= 0:
            raise ValueError("rate_unit must be positive")

    @property
    def links(self) -> list[tuple[str, tuple[int, int]]]:
        return self.plan.links()


def reward_terms(rates, cfg: RewardConfig) -> tuple[float, float]:
    """(bonus, penalty) where penalty sums the hinge violations of every target.

    ``rates`` is either a mapping link -> rate or a sequence aligned with
    ``cfg.links``.
    """
    links = cfg.links
    if isinstance(rates, dict):
        vals = [rates[e] for _, e in links]
    else:
        vals = list(np.asarray(rates, dtype=float))
        if len(vals) != len(links):
            raise ValueError(f"expected {len(links)} rates, got {len(vals)}")
    u = cfg.rate_unit
    r_up, r_lo = cfg.thresholds.r_upper / u, cfg.thresholds.r_lower / u
    bonus = penalty = 0.0
    for (kind, _), rate in zip(links, vals):
        rate = rate / u
        if kind == "C":
            bonus += rate
            penalty += max(r_up - rate, 0.0)
        else:
            bonus -= rate
            penalty += max(rate - r_lo, 0.0)
    return bonus, penalty


def reward(rates, cfg: RewardConfig) -> float:
    bonus, penalty = reward_terms(rates, cfg)
    return bonus - cfg.gamma_penalty * penalty


def targets_met(rates, cfg: RewardConfig) -> np.ndarray:
    out = []
    for (kind, _), rate in zip(cfg.links, rates):
        out.append(rate >= cfg.thresholds.r_upper if kind == "C" else rate <= cfg.thresholds.r_lower)
    return np.array(out, dtype=bool)


# ---------------------------------------------------------------- environment

class RisEnv:
    """Fixed-channel rate evaluation for the links a plan cares about."""

    def __init__(self, geom: Geometry, params: ChannelParams, reward_cfg: RewardConfig,
                 rate_bounds: tuple[float, float], seed: int = 0):
        self.geom, self.params, self.cfg = geom, params, reward_cfg
        self.rate_bounds = tuple(rate_bounds)
        self.seed = seed
        self.links = [e for _, e in reward_cfg.links]
        if not self.links:
            raise ValueError("plan has no links to control")
        self.ch: Optional[ChannelSet] = None

    @property
    def elements(self) -> int:
        return self.geom.ris_elements

    @property
    def state_dim(self) -> int:
        return 2 * self.elements + len(self.links)

    def channel_seed(self, episode: int, split: str = "train") -> list:
        return [self.seed, 0 if split == "train" else 1, episode]

    def reset(self, episode: int = 0, split: str = "train", channels: Optional[ChannelSet] = None) -> MdpState:
        self.ch = channels if channels is not None else sample_channels(
            self.geom, self.params, self.channel_seed(episode, split))
        self.h, self.a = self.ch.link_matrix(self.links)
        phi = PhaseShiftVector.ones(self.elements)
        return encode_state(self.rates(phi), phi, self.rate_bounds)

    def rates(self, phi: PhaseShiftVector) -> np.ndarray:
        return rate_from_gain(self.h + self.a @ phi.coefficients, self.params)

    def gains(self, phi: PhaseShiftVector) -> np.ndarray:
        return self.h + self.a @ phi.coefficients

    def step(self, phi: PhaseShiftVector) -> tuple[MdpState, float, np.ndarray]:
        r = self.rates(phi)
        return encode_state(r, phi, self.rate_bounds), reward(r, self.cfg), r


# ---------------------------------------------------------------- agent

@dataclass(frozen=True)
class DdpgConfig:
    hidden: tuple = (300, 200)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    discount: float = 0.9
    soft_tau: float = 0.01
    buffer_size: int = 10_000
    batch_size: int = 32
    warmup: Optional[int] = 1000  # None: train only once the buffer is full
    noise_sigma: float = 0.2
    noise_decay: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")
        if not 0 < self.soft_tau <= 1:
            raise ValueError("soft_tau must be in (0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("need 1 <= batch_size <= buffer_size")

    @property
    def train_gate(self) -> int:
        if self.warmup is None:
            return self.buffer_size
        return max(self.batch_size, self.warmup)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of (s, a, r, s') transitions."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.head = 0
        self.count = 0

    def __len__(self):
        return self.count

    def add(self, s, a, r, s2) -> None:
        i = self.head
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.head = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def sample(self, rng, batch: int):
        idx = rng.integers(0, self.count, size=batch)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx]

    def oldest(self):
        i = self.head if self.count == self.capacity else 0
        return self.s[i], self.a[i], self.r[i], self.s2[i]


class DdpgAgent:
    def __init__(self, state_dim: int, elements: int, cfg: DdpgConfig = DdpgConfig()):
        self.cfg = cfg
        self.state_dim, self.elements = state_dim, elements
        self.action_dim = 2 * elements
        self.rng = np.random.default_rng([cfg.seed, 7])
        init = np.random.default_rng([cfg.seed, 1])
        self.actor = MLP((state_dim, *cfg.hidden, self.action_dim), init)
        self.critic = MLP((state_dim + self.action_dim, *cfg.hidden, 1), init, out_scale=3e-3)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = Adam(self.actor.size, cfg.actor_lr)
        self.critic_opt = Adam(self.critic.size, cfg.critic_lr)
        self.replay = ReplayBuffer(cfg.buffer_size, state_dim, self.action_dim)
        self.noise_sigma = cfg.noise_sigma

    # checkpoint: shape header followed by one value per line
    def save(self, path) -> None:
        blocks = [("actor", self.actor), ("critic", self.critic),
                  ("target_actor", self.target_actor), ("target_critic", self.target_critic)]
        with open(path, "w") as fh:
            for name, net in blocks:
                fh.write(f"# {name} {' '.join(map(str, net.sizes))} {net.size}\n")
            for _, net in blocks:
                fh.writelines(f"{float(x)!r}\n" for x in net.params)

    def load(self, path) -> None:
        with open(path) as fh:
            lines = fh.read().splitlines()
        headers = [l for l in lines if l.startswith("#")]
        values = np.array([float(l) for l in lines if l and not l.startswith("#")])
        nets = {"actor": self.actor, "critic": self.critic,
                "target_actor": self.target_actor, "target_critic": self.target_critic}
        i = 0
        for h in headers:
            parts = h[1:].split()
            name, sizes, size = parts[0], tuple(map(int, parts[1:-1])), int(parts[-1])
            net = nets[name]
            if net.sizes != sizes:
                raise ValueError(f"{path}: {name} has shape {sizes}, agent expects {net.sizes}")
            net.params[:] = values[i:i + size]
            i += size
        if i != values.size:
            raise ValueError(f"{path}: {values.size - i} trailing values")


def project_pairs(raw: np.ndarray) -> np.ndarray:
    """Normalise consecutive (re, im) pairs to unit length; a zero pair becomes (1, 0)."""
    z = project_unit(deinterleave(raw))
    out = np.empty(np.shape(raw))
    out[..., 0::2], out[..., 1::2] = z.real, z.imag
    return out


def _project_backward(raw: np.ndarray, grad_proj: np.ndarray) -> np.ndarray:
    """Chain rule through ``project_pairs``: J = (I - p p^T) / |u| per pair."""
    x, y = raw[..., 0::2], raw[..., 1::2]
    norm = np.hypot(x, y)
    safe = np.where(norm > 0, norm, 1.0)
    px, py = x / safe, y / safe
    gx, gy = grad_proj[..., 0::2], grad_proj[..., 1::2]
    dot = gx * px + gy * py
    out = np.empty_like(raw)
    out[..., 0::2] = np.where(norm > 0, (gx - dot * px) / safe, 0.0)
    out[..., 1::2] = np.where(norm > 0, (gy - dot * py) / safe, 0.0)
    return out


def act(agent: DdpgAgent, state, explore: bool = False) -> PhaseShiftVector:
    s = state.vector() if isinstance(state, MdpState) else np.asarray(state, float)
    raw = agent.actor(s)[0]
    if explore:
        raw = raw + agent.rng.normal(0.0, agent.noise_sigma, raw.shape)
    return PhaseShiftVector(deinterleave(project_pairs(raw)))


def critic_loss_grad(agent: DdpgAgent, batch, params=None):
    """Mean squared TD error and its gradient w.r.t. the critic's parameters."""
    s, a, r, s2 = batch
    a2 = project_pairs(agent.target_actor(s2))
    q_next = agent.target_critic(np.hstack([s2, a2]))[:, 0]
    y = r + agent.cfg.discount * q_next
    critic = agent.critic
    if params is not None:
        critic = critic.copy()
        critic.params = params
    q, acts = critic.forward(np.hstack([s, a]))
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    grad, _ = critic.backward(acts, (2.0 / len(err)) * err[:, None])
    return loss, grad


def actor_objective_grad(agent: DdpgAgent, states, params=None):
    """Mean Q(s, mu(s)) and its gradient w.r.t. the actor's parameters (ascent direction)."""
    actor = agent.actor
    if params is not None:
        actor = actor.copy()
        actor.params = params
    raw, a_acts = actor.forward(states)
    a = project_pairs(raw)
    q, c_acts = agent.critic.forward(np.hstack([states, a]))
    n = len(states)
    _, d_in = agent.critic.backward(c_acts, np.full((n, 1), 1.0 / n))
    d_a = d_in[:, agent.state_dim:]
    grad, _ = actor.backward(a_acts, _project_backward(raw, d_a))
    return float(np.mean(q)), grad


@dataclass
class TrainResult:
    critic_loss: float = float("nan")
    actor_objective: float = float("nan")
    skipped: bool = False


def train_step(agent: DdpgAgent, batch=None) -> TrainResult:
    if batch is None:
        if len(agent.replay) < agent.cfg.batch_size:
            return TrainResult(skipped=True)
        batch = agent.replay.sample(agent.rng, agent.cfg.batch_size)
    loss, g_c = critic_loss_grad(agent, batch)
    agent.critic_opt.step(agent.critic.params, g_c)
    obj, g_a = actor_objective_grad(agent, batch[0])
    agent.actor_opt.step(agent.actor.params, -g_a)
    return TrainResult(loss, obj)


def soft_update(agent: DdpgAgent) -> None:
    tau = agent.cfg.soft_tau
    for online, target in ((agent.actor, agent.target_actor), (agent.critic, agent.target_critic)):
        if online.params.shape != target.params.shape:
            raise ValueError("online and target networks differ in shape")
        target.params *= 1.0 - tau
        target.params += tau * online.params


# ---------------------------------------------------------------- training / evaluation

@dataclass
class TrainingCurve:
    episode: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)
    penalty_rate: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "mean_reward", "penalty_rate"])
            for row in zip(self.episode, self.mean_reward, self.penalty_rate):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def train(env: RisEnv, agent: DdpgAgent, episodes: int, steps: int, on_action=None) -> TrainingCurve:
    """Run the act/step/store/learn loop; returns per-episode mean reward.

    ``penalty_rate`` is the fraction of steps in the episode with a non-zero
    penalty term. ``on_action`` (if given) sees every emitted phase vector.
    """
    curve = TrainingCurve()
    gate = agent.cfg.train_gate
    for ep in range(episodes):
        state = env.reset(ep)
        total, violations = 0.0, 0
        for _ in range(steps):
            phi = act(agent, state, explore=True)
            if on_action is not None:
                on_action(phi)
            nxt, rew, rates = env.step(phi)
            agent.replay.add(state.vector(), interleave(phi), rew, nxt.vector())
            if len(agent.replay) >= gate:
                train_step(agent)
                soft_update(agent)
            total += rew
            violations += int(not targets_met(rates, env.cfg).all())
            state = nxt
        agent.noise_sigma *= agent.cfg.noise_decay
        curve.episode.append(ep)
        curve.mean_reward.append(total / steps)
        curve.penalty_rate.append(violations / steps)
        if ep % 50 == 0:
            log.info("episode %d mean reward %.3f", ep, total / steps)
    return curve


def rollout(agent: DdpgAgent, env: RisEnv, steps: int) -> PhaseShiftVector:
    """Greedy closed-loop rollout on the current channel; returns the last action."""
    state = env.reset(channels=env.ch) if env.ch is not None else env.reset()
    phi = PhaseShiftVector.ones(env.elements)
    for _ in range(steps):
        phi = act(agent, state, explore=False)
        state, _, _ = env.step(phi)
    return phi


@dataclass
class EvalReport:
    rows: list            # (draw, link, target_type, achieved_rate, threshold, met)
    success: np.ndarray   # per draw: every target met
    ddpg_residual: np.ndarray
    direct_residual: np.ndarray

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.success))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["draw", "link", "target_type", "achieved_rate", "threshold", "met"])
            for d, link, kind, rate, thr, met in self.rows:
                w.writerow([d, f"{link[0]}-{link[1]}", kind, repr(float(rate)), repr(float(thr)), str(bool(met)).lower()])


def evaluate(agent: DdpgAgent, env: RisEnv, draws: int, steps: int = 10) -> EvalReport:
    """Score the greedy policy on held-out channel draws.

    Residuals are |effective gain| on the deconstruction links, compared with
    the element-wise direct baseline on the same draws.
    """
    rows, success, ours, base = [], [], [], []
    dec_idx = [i for i, (k, _) in enumerate(env.cfg.links) if k == "D"]
    thr = env.cfg.thresholds
    for d in range(draws):
        env.reset(d, split="eval")
        phi = rollout(agent, env, steps)
        rates = env.rates(phi)
        met = targets_met(rates, env.cfg)
        success.append(bool(met.all()))
        for (kind, link), r, ok in zip(env.cfg.links, rates, met):
            rows.append((d, link, "construct" if kind == "C" else "deconstruct", r,
                         thr.r_upper if kind == "C" else thr.r_lower, ok))
        if dec_idx:
            ours.append(float(np.mean(np.abs(env.gains(phi))[dec_idx])))
            sol = direct_control(env.ch, env.cfg.plan)
            base.append(float(np.mean(list(sol.residuals.values()))))
    return EvalReport(rows, np.array(success), np.array(ours), np.array(base))
