import csv

import pytest

from ristopo.cli import main
from ristopo.config import parse_config
from ristopo.harness import StageError, read_manifest, report, run_scenario


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_empty_stages_manifest_only(tmp_path):
    art = run_scenario(parse_config(""), tmp_path)
    assert art.files == [] and sorted(p.name for p in tmp_path.iterdir()) == ["manifest.csv"]
    man = read_manifest(tmp_path)
    assert man["stages"] == "" and man["default:channel.noise_power_dbm"] == "-90.0"
    assert len(man["config_sha256"]) == 64


def test_manifest_lists_only_implicit_defaults(tmp_path):
    run_scenario(parse_config("channel.ref_loss_db = 35.0\n"), tmp_path)
    man = read_manifest(tmp_path)
    assert "default:channel.ref_loss_db" not in man and "default:channel.rice_factor" in man


def test_ring_spectrum_row(tmp_path):
    run_scenario(parse_config('graph.preset = "ring8"\nstages = ["spectrum"]\n'), tmp_path)
    (row,) = rows(tmp_path / "spectrum.csv")
    assert float(row["lambda2"]) == pytest.approx(0.5858, abs=1e-4)


def test_star_sweep_flip_and_report(tmp_path):
    text = 'graph.preset = "star8"\nstages = ["consensus-sweep"]\n'
    run_scenario(parse_config(text), tmp_path)
    labels = {float(r["tau"]): r["label"] for r in rows(tmp_path / "sweep.csv")}
    assert labels[0.19] == "converged" and labels[0.2] == "diverged"
    assert all(labels[t] == "converged" for t in (0.17, 0.18))
    assert all(labels[t] == "diverged" for t in (0.21, 0.22))
    first = report(tmp_path)
    fig5 = (tmp_path / "fig5-family.csv").read_bytes()
    summary = (tmp_path / "summary.txt").read_bytes()
    assert report(tmp_path) == first
    assert (tmp_path / "fig5-family.csv").read_bytes() == fig5
    assert (tmp_path / "summary.txt").read_bytes() == summary
    assert any(l.startswith("PASS consensus sweep") for l in first)
    assert "GAP stage fl-bench not run" in first


def test_identical_bytes(tmp_path):
    text = 'stages = ["spectrum", "audit", "plan"]\n'
    for d in ("a", "b"):
        run_scenario(parse_config(text), tmp_path / d)
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_stage_failure_names_stage(tmp_path):
    with pytest.raises(StageError) as err:
        run_scenario(parse_config('stages = ["evaluate-ris"]\n'), tmp_path)
    assert err.value.stage == "evaluate-ris"


def test_report_needs_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        report(tmp_path)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["spectrum", "--preset", "ring8", "--out", str(tmp_path / "ok")]) == 0
    assert (tmp_path / "ok" / "spectrum.csv").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text('seed = 1\nchannel.ricefactor = 2\n')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "bad.toml:2" in capsys.readouterr().err
    assert main(["eval-ris", "--out", str(tmp_path / "empty")]) == 1
    assert "evaluate-ris" in capsys.readouterr().err


def test_cli_seed_flag(tmp_path):
    assert main(["run", "--seed", "7", "--out", str(tmp_path)]) == 0
    assert read_manifest(tmp_path)["seed"] == "7"


def test_cli_graph_file(tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("0 1\n1 2\n2 0\n")
    assert main(["audit", "--graph", str(g), "--out", str(tmp_path / "o")]) == 0
    audit = {r["key"]: r["value"] for r in rows(tmp_path / "o" / "audit.csv")}
    assert audit["has_odd_cycle"] == "true" and audit["graph"] == "g.txt"
