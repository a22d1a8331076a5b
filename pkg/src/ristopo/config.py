"""Scenario files: flat dotted keys in TOML syntax, every key has a default.

    seed = 3
    stages = ["spectrum", "consensus-sweep"]
    graph.preset = "star8"
    channel.rice_factor = 10
"""
from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STAGES = ("spectrum", "audit", "plan", "consensus-sweep", "train-ris", "evaluate-ris", "fl-bench")

DEFAULTS: dict = {
    "seed": 0,
    "stages": [],
    "graph.preset": "fig3a-candidate",
    "graph.edge_list": "",
    "channel.bandwidth": 3e6,
    "channel.tx_power_dbm": 30.0,
    "channel.noise_power_dbm": -90.0,
    "channel.rice_factor": 10.0,
    "channel.los_exponent": 1.5,
    "channel.nlos_exponent": 4.0,
    "channel.ref_loss_db": 30.0,
    "channel.carrier_hz": 5.9e9,
    "geometry.preset": "intersection",
    "geometry.ris_elements": 16,
    "planner.eta": 1.0,
    "planner.max_degree_cap": 4,
    "planner.brute_force_cap": 7,
    "planner.edit_budget": 4,
    "planner.lookahead": 2,
    "thresholds.traffic_volume": 7.0e6,
    "thresholds.r_lower": 16e6,
    "ris.plan": "fig3b",
    "ddpg.actor_lr": 1e-4,
    "ddpg.critic_lr": 1e-4,
    "ddpg.discount": 0.9,
    "ddpg.soft_tau": 0.01,
    "ddpg.buffer_size": 10000,
    "ddpg.batch_size": 32,
    "ddpg.warmup": 1000,
    "ddpg.noise_sigma": 0.2,
    "ddpg.noise_decay": 0.999,
    "ddpg.gamma_penalty": 5.0,
    "ddpg.rate_unit": 1e8,
    "ddpg.rate_max": 40e6,
    "ddpg.episodes": 400,
    "ddpg.steps": 50,
    "ddpg.eval_draws": 50,
    "ddpg.eval_steps": 10,
    "consensus.taus": [0.17, 0.18, 0.19, 0.20, 0.21, 0.22],
    "consensus.horizon": 100.0,
    "consensus.dt": 0.0,
    "consensus.components": 1,
    "fl.rounds": 10,
    "fl.epochs_per_round": 10,
    "fl.seeds": 5,
    "fl.modes": ["revised", "none"],
    "fl.staleness": [0],
    "fl.sharing_step": 0.0,
    "fl.n_samples": 5000,
    "fl.dim": 32,
    "fl.classes": 5,
    "fl.noise": 2.0,
    "fl.hidden": 16,
    "fl.lr": 0.005,
    "fl.batch": 32,
}


class ConfigError(ValueError):
    pass


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _line_of(text: str, key: str) -> int:
    last = key.rsplit(".", 1)[-1]
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=|^\s*{re.escape(last)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return 0


def _coerce(key: str, value, default, where: str):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where}: {key} expects {type(default).__name__}, got {value!r}")
    return value


@dataclass
class ScenarioConfig:
    values: dict
    explicit: set = field(default_factory=set)
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name: str) -> dict:
        p = name + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def stages(self) -> list:
        return list(self.values["stages"])

    def defaults_used(self) -> list:
        return sorted(k for k in self.values if k not in self.explicit)

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def override(self, **kv) -> "ScenarioConfig":
        vals = dict(self.values)
        explicit = set(self.explicit)
        for k, v in kv.items():
            if k not in DEFAULTS:
                raise ConfigError(f"{k}: unknown key")
            vals[k] = _coerce(k, v, DEFAULTS[k], "override")
            explicit.add(k)
        return ScenarioConfig(vals, explicit, self.source)


def validate(values: dict, text: str = "", source: str = "<config>") -> ScenarioConfig:
    merged = dict(DEFAULTS)
    for key, value in values.items():
        where = f"{source}:{_line_of(text, key)}" if text else source
        if key not in DEFAULTS:
            close = [k for k in DEFAULTS if k.rsplit(".", 1)[-1] == key.rsplit(".", 1)[-1]]
            hint = f" (did you mean {close[0]}?)" if close else ""
            raise ConfigError(f"{where}: unknown key {key!r}{hint}")
        merged[key] = _coerce(key, value, DEFAULTS[key], where)
    for st in merged["stages"]:
        if st not in STAGES:
            raise ConfigError(f"{source}:{_line_of(text, 'stages')}: unknown stage {st!r}; expected {STAGES}")
    return ScenarioConfig(merged, set(values), source)


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return validate(_flatten(tree), text, source)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def default_config() -> ScenarioConfig:
    return ScenarioConfig(dict(DEFAULTS), set())


def dump_config(cfg: ScenarioConfig) -> str:
    """Render as flat dotted TOML, one key per line, sorted."""
    def fmt(v):
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)
    return "".join(f"{k} = {fmt(v)}\n" for k, v in sorted(cfg.values.items()))
