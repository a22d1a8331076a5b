"""Run configured stages into an artifact directory and summarise them."""
from __future__ import annotations

import csv
import hashlib
import logging
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelParams, intersection_geometry
from .config import ScenarioConfig
from .consensus import DelayModel, classify_stability, simulate_ode
from .ddpg import DdpgAgent, DdpgConfig, RewardConfig, RisEnv, evaluate, train
from .flbench import gen_multiview_dataset, run_fl, write_accuracy_csv
from .graph import (FIG3B_CONSTRUCT, FIG3B_DECONSTRUCT, Graph, fig3a_candidate, fig3b_candidate,
                    graph_spectrum, preset, read_graph, structure_report, tolerable_delay)
from .planner import (LinkPlan, PlannerConfig, RateThresholds, criteria_audit, p1_score,
                      plan_revision, required_rates)

log = logging.getLogger(__name__)

MANIFEST = "manifest.csv"
CHECKPOINT = "agent.ckpt"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunArtifacts:
    out_dir: Path
    files: list = field(default_factory=list)
    stages: list = field(default_factory=list)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def scenario_graph(cfg: ScenarioConfig) -> tuple[str, Graph]:
    path = cfg["graph.edge_list"]
    if path:
        return Path(path).name, read_graph(path)
    name = cfg["graph.preset"]
    return name, preset(name)


def planner_config(cfg: ScenarioConfig) -> PlannerConfig:
    return PlannerConfig(**cfg.section("planner"))


def ris_plan(cfg: ScenarioConfig, g: Graph) -> LinkPlan:
    choice = cfg["ris.plan"]
    if choice == "fig3b":
        return LinkPlan(construct=FIG3B_CONSTRUCT, deconstruct=FIG3B_DECONSTRUCT)
    if choice == "planner":
        return plan_revision(g, planner_config(cfg))
    raise ValueError(f"ris.plan must be 'fig3b' or 'planner', got {choice!r}")


def ris_setup(cfg: ScenarioConfig) -> tuple[RisEnv, DdpgConfig]:
    _, g = scenario_graph(cfg)
    plan = ris_plan(cfg, g)
    revised = plan.apply(g)
    lam_max = graph_spectrum(revised).lambda_max
    thr = RateThresholds.for_graph(cfg["thresholds.traffic_volume"], lam_max, cfg["thresholds.r_lower"])
    d = cfg.section("ddpg")
    rcfg = RewardConfig(d["gamma_penalty"], thr, plan, rate_unit=d["rate_unit"])
    if cfg["geometry.preset"] != "intersection":
        raise ValueError(f"unknown geometry preset {cfg['geometry.preset']!r}")
    geom = intersection_geometry(cfg["geometry.ris_elements"])
    env = RisEnv(geom, ChannelParams(**cfg.section("channel")), rcfg, (0.0, d["rate_max"]), seed=cfg.seed)
    warm = d["warmup"] if d["warmup"] > 0 else None
    dcfg = DdpgConfig(actor_lr=d["actor_lr"], critic_lr=d["critic_lr"], discount=d["discount"],
                      soft_tau=d["soft_tau"], buffer_size=d["buffer_size"], batch_size=d["batch_size"],
                      warmup=warm, noise_sigma=d["noise_sigma"], noise_decay=d["noise_decay"], seed=cfg.seed)
    return env, dcfg


# ---------------------------------------------------------------- stages

def stage_spectrum(cfg, out: Path) -> list[str]:
    name, g = scenario_graph(cfg)
    s = graph_spectrum(g)
    rows = [[name, g.node_count, g.edge_count, _fmt(s.lambda2), _fmt(s.lambda_max),
             _fmt(tolerable_delay(s.lambda_max)), " ".join(f"{x:.12g}" for x in s.eigenvalues)]]
    _write_rows(out / "spectrum.csv",
                ["graph", "nodes", "edges", "lambda2", "lambda_max", "tolerable_delay", "eigenvalues"], rows)
    return ["spectrum.csv"]


def stage_audit(cfg, out: Path) -> list[str]:
    name, g = scenario_graph(cfg)
    pc = planner_config(cfg)
    rep = structure_report(g, cap=max(pc.brute_force_cap, 16))
    aud = criteria_audit(g, pc)
    rows = [
        ["graph", name], ["d_max", rep.d_max], ["is_bipartite", _fmt(rep.is_bipartite)],
        ["has_odd_cycle", _fmt(rep.has_odd_cycle)], ["conductance", _fmt(rep.conductance)],
        ["neighbor_structure", " ".join(rep.neighbor_structure)],
        ["degree_ok", _fmt(aud.degree_ok)], ["odd_cycle_ok", _fmt(aud.odd_cycle_ok)],
        ["diameter_pairs", " ".join(f"{u}-{v}:{d}" for u, v, d in aud.diameter_pairs)],
        ["singleton_violations", " ".join(f"{i}:{e[0]}-{e[1]}" for i, e in aud.singleton_violations)],
        ["all_ok", _fmt(aud.all_ok)],
    ]
    _write_rows(out / "audit.csv", ["key", "value"], rows)
    return ["audit.csv"]


def stage_plan(cfg, out: Path) -> list[str]:
    _, g = scenario_graph(cfg)
    pc = planner_config(cfg)
    plan = plan_revision(g, pc)
    plan.write(out / "plan.txt")
    h = plan.apply(g)
    rows = []
    for label, graph in (("initial", g), ("revised", h)):
        s = graph_spectrum(graph)
        rows.append([label, _fmt(s.lambda2), _fmt(s.lambda_max), _fmt(tolerable_delay(s.lambda_max)),
                     _fmt(p1_score(graph, pc))])
    _write_rows(out / "plan_summary.csv", ["graph", "lambda2", "lambda_max", "tolerable_delay", "score"], rows)
    lam = graph_spectrum(h).lambda_max
    thr = RateThresholds.for_graph(cfg["thresholds.traffic_volume"], lam, cfg["thresholds.r_lower"])
    req = required_rates(plan, lam, thr)
    _write_rows(out / "required_rates.csv", ["link", "bound", "rate"],
                [[f"{u}-{v}", kind, _fmt(r)] for (u, v), (kind, r) in sorted(req.items())])
    return ["plan.txt", "plan_summary.csv", "required_rates.csv"]


def stage_consensus(cfg, out: Path) -> list[str]:
    name, g = scenario_graph(cfg)
    s = graph_spectrum(g)
    tau_star = tolerable_delay(s.lambda_max)
    rng = np.random.default_rng([cfg.seed, 5])
    init = rng.standard_normal((g.node_count, cfg["consensus.components"]))
    dt = cfg["consensus.dt"] or None
    rows, files = [], ["sweep.csv"]
    for tau in sorted(cfg["consensus.taus"]):
        trace = simulate_ode(g, DelayModel.uniform(tau), init, dt=dt,
                             horizon=cfg["consensus.horizon"], stop_factor=1e4)
        label = classify_stability(trace)
        d0 = trace.deviation[0]
        rows.append([name, _fmt(tau), _fmt(tau_star), label, _fmt(trace.deviation[-1] / d0),
                     _fmt(float(trace.times[-1]))])
        fname = f"deviation_tau{tau:.4f}.csv"
        trace.write_deviation_csv(out / fname, stride=max(1, int(round(0.05 / trace.dt))))
        files.append(fname)
    _write_rows(out / "sweep.csv", ["graph", "tau", "tau_star", "label", "final_ratio", "end_time"], rows)
    return files


def stage_train_ris(cfg, out: Path) -> list[str]:
    env, dcfg = ris_setup(cfg)
    agent = DdpgAgent(env.state_dim, env.elements, dcfg)
    curve = train(env, agent, cfg["ddpg.episodes"], cfg["ddpg.steps"])
    curve.write_csv(out / "ddpg_curve.csv")
    agent.save(out / CHECKPOINT)
    return ["ddpg_curve.csv", CHECKPOINT]


def stage_evaluate_ris(cfg, out: Path) -> list[str]:
    env, dcfg = ris_setup(cfg)
    ckpt = out / CHECKPOINT
    if not ckpt.exists():
        raise FileNotFoundError(f"{ckpt} missing; run train-ris first")
    agent = DdpgAgent(env.state_dim, env.elements, dcfg)
    agent.load(ckpt)
    rep = evaluate(agent, env, cfg["ddpg.eval_draws"], cfg["ddpg.eval_steps"])
    rep.write_csv(out / "eval_report.csv")
    _write_rows(out / "eval_summary.csv", ["key", "value"], [
        ["draws", len(rep.success)], ["success_rate", _fmt(rep.success_rate)],
        ["ddpg_mean_residual", _fmt(float(np.mean(rep.ddpg_residual)))],
        ["direct_mean_residual", _fmt(float(np.mean(rep.direct_residual)))],
    ])
    return ["eval_report.csv", "eval_summary.csv"]


def stage_fl(cfg, out: Path) -> list[str]:
    _, g = scenario_graph(cfg)
    f = cfg.section("fl")
    step = f["sharing_step"] or None
    results, summary = [], []
    for mode in f["modes"]:
        graph = g
        if mode == "revised":
            graph = fig3b_candidate() if cfg["ris.plan"] == "fig3b" and g == fig3a_candidate() \
                else plan_revision(g, planner_config(cfg)).apply(g)
        elif mode == "ring":
            graph = preset("ring8") if g.node_count == 8 else g
        for s in f["staleness"]:
            finals = []
            for seed in range(f["seeds"]):
                ds = gen_multiview_dataset([cfg.seed, seed], f["n_samples"], f["dim"], f["classes"], f["noise"])
                res = run_fl(ds, graph, mode, f["rounds"], f["epochs_per_round"], staleness=s,
                             sharing_step=step, hidden=f["hidden"], lr=f["lr"], batch=f["batch"],
                             seed=[cfg.seed, seed])
                res.rows = [(r, i, f"{mode}/seed{seed}", a) for r, i, _, a in res.rows]
                results.append(res)
                finals.append(res.final_mean)
            summary.append([mode, s, _fmt(results[-1].sharing_step), _fmt(float(np.mean(finals))),
                            _fmt(float(np.std(finals)))])
    write_accuracy_csv(results, out / "fl_accuracy.csv")
    _write_rows(out / "fl_summary.csv", ["mode", "staleness", "sharing_step", "mean_accuracy", "std_accuracy"], summary)
    return ["fl_accuracy.csv", "fl_summary.csv"]


STAGE_FUNCS = {
    "spectrum": stage_spectrum,
    "audit": stage_audit,
    "plan": stage_plan,
    "consensus-sweep": stage_consensus,
    "train-ris": stage_train_ris,
    "evaluate-ris": stage_evaluate_ris,
    "fl-bench": stage_fl,
}


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: ScenarioConfig, out: Path, stages, files) -> None:
    rows = [
        ["config_sha256", cfg.digest()],
        ["seed", cfg.seed],
        ["package_version", __version__],
        ["numpy_version", np.__version__],
        ["python_version", platform.python_version()],
        ["stages", " ".join(stages)],
    ]
    rows += [[f"file:{f}", _sha(out / f)] for f in files]
    rows += [[f"default:{k}", repr(cfg[k])] for k in cfg.defaults_used()]
    _write_rows(out / MANIFEST, ["key", "value"], rows)


def run_scenario(cfg: ScenarioConfig, out_dir, stages=None) -> RunArtifacts:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages = cfg.stages if stages is None else list(stages)
    files: list = []
    done: list = []
    for st in stages:
        if st not in STAGE_FUNCS:
            raise StageError(st, ValueError("unknown stage"))
        log.info("running stage %s", st)
        try:
            files += STAGE_FUNCS[st](cfg, out)
        except Exception as exc:
            write_manifest(cfg, out, done, files)
            raise StageError(st, exc) from exc
        done.append(st)
    write_manifest(cfg, out, done, files)
    return RunArtifacts(out, files, done)


# ---------------------------------------------------------------- report

def read_manifest(out_dir) -> dict:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; nothing to report")
    return {r["key"]: r["value"] for r in _read_rows(path)}


def report(out_dir) -> list[str]:
    """Write figure-family CSVs plus summary.txt; returns the summary lines."""
    out = Path(out_dir)
    man = read_manifest(out)
    stages = man.get("stages", "").split()
    lines = [f"config {man.get('config_sha256', '?')[:16]} seed {man.get('seed', '?')}"]
    gaps = [st for st in STAGE_FUNCS if st not in stages]

    if "consensus-sweep" in stages:
        rows = _read_rows(out / "sweep.csv")
        _write_rows(out / "fig5-family.csv", ["graph", "tau", "tau_star", "label"],
                    [[r["graph"], r["tau"], r["tau_star"], r["label"]] for r in rows])
        ok = all((r["label"] == "converged") == (float(r["tau"]) < float(r["tau_star"]))
                 for r in rows if r["label"] != "undecided")
        lines.append(f"{'PASS' if ok else 'FAIL'} consensus sweep agrees with tau* = {rows[0]['tau_star'][:7]}"
                     if rows else "FAIL consensus sweep empty")
    if "evaluate-ris" in stages:
        rows = _read_rows(out / "eval_report.csv")
        agg: dict = {}
        for r in rows:
            a = agg.setdefault((r["link"], r["target_type"], r["threshold"]), [])
            a.append((float(r["achieved_rate"]), r["met"] == "true"))
        _write_rows(out / "fig6-rates.csv", ["link", "target_type", "mean_rate", "threshold", "met_fraction"],
                    [[k[0], k[1], _fmt(np.mean([x for x, _ in v])), k[2], _fmt(np.mean([m for _, m in v]))]
                     for k, v in sorted(agg.items())])
        summ = {r["key"]: r["value"] for r in _read_rows(out / "eval_summary.csv")}
        rate = float(summ["success_rate"])
        lines.append(f"{'PASS' if rate >= 0.8 else 'FAIL'} ris targets met on {rate:.0%} of draws (need 80%)")
        better = float(summ["ddpg_mean_residual"]) < float(summ["direct_mean_residual"])
        lines.append(f"{'PASS' if better else 'FAIL'} learned residual below direct baseline")
    if "train-ris" in stages:
        rows = _read_rows(out / "ddpg_curve.csv")
        _write_rows(out / "fig7-ddpg-curve.csv", ["episode", "mean_reward", "penalty_rate"],
                    [[r["episode"], r["mean_reward"], r["penalty_rate"]] for r in rows])
        rw = np.array([float(r["mean_reward"]) for r in rows])
        if len(rw) >= 200:
            ok = rw[-100:].mean() > rw[:100].mean()
            lines.append(f"{'PASS' if ok else 'FAIL'} reward rises: first-100 {rw[:100].mean():.4f} "
                         f"last-100 {rw[-100:].mean():.4f}")
        else:
            lines.append(f"SKIP reward trend needs >= 200 episodes, have {len(rw)}")
    if "fl-bench" in stages:
        rows = _read_rows(out / "fl_accuracy.csv")
        curves: dict = {}
        for r in rows:
            mode = r["mode"].split("/")[0]
            curves.setdefault((mode, int(r["staleness"]), int(r["round"])), []).append(float(r["accuracy"]))
        _write_rows(out / "fig10-fl-accuracy.csv", ["mode", "staleness", "round", "mean_accuracy"],
                    [[m, s, rd, _fmt(np.mean(v))] for (m, s, rd), v in sorted(curves.items())])
        summ = {(r["mode"], int(r["staleness"])): float(r["mean_accuracy"]) for r in _read_rows(out / "fl_summary.csv")}
        if ("revised", 0) in summ and ("none", 0) in summ:
            gap = summ[("revised", 0)] - summ[("none", 0)]
            lines.append(f"{'PASS' if gap >= 0.02 else 'FAIL'} revised sharing beats no sharing by {gap * 100:.1f} pp")
    for st in ("spectrum", "audit", "plan"):
        if st in stages:
            lines.append(f"INFO {st} written")
    lines += [f"GAP stage {st} not run" for st in gaps]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return lines
