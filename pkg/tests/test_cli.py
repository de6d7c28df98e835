"""Command line interface: argument plumbing, outputs, exit codes."""

import json

import pytest

from stochgrowth.cli import main
from stochgrowth.harness import ExperimentConfig


FAST = ["--t-max", "20", "--replicas", "5", "--seed", "3", "--workers", "1"]


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_simulate_prints_summary_json(capsys):
    code, out, _ = run_cli(
        capsys, ["simulate", "--kind", "osp", "--dim", "1", "--p", "0.8", *FAST]
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["kind"] == "osp"
    assert doc["n"] == 5
    assert 0.0 <= doc["survival_fraction"] <= 1.0
    assert "verdicts" in doc


def test_simulate_writes_run_files(tmp_path, capsys):
    argv = [
        "simulate", "--kind", "osp", "--p", "0.8", *FAST,
        "--out", str(tmp_path), "--label", "demo", "--trace",
    ]
    code, _, err = run_cli(capsys, argv)
    assert code == 0
    assert (tmp_path / "demo.jsonl").exists()
    assert (tmp_path / "demo-summary.csv").exists()
    assert "demo.jsonl" in err


def test_flag_beats_set_beats_config_file(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[model]\nkind = osp\np = 0.3\n[run]\nt_max = 10\nreplicas = 3\n"
    )
    code, out, _ = run_cli(
        capsys, ["simulate", "--config", str(ini), "--set", "model.p=0.5"]
    )
    assert code == 0
    assert json.loads(out)["params"]["p"] == 0.5

    code, out, _ = run_cli(
        capsys,
        ["simulate", "--config", str(ini), "--set", "model.p=0.5", "--p", "0.7"],
    )
    assert code == 0
    assert json.loads(out)["params"]["p"] == 0.7


def test_bad_config_exits_2(capsys):
    code, _, err = run_cli(
        capsys, ["simulate", "--kind", "wavelet", "--dim", "1", *FAST]
    )
    assert code == 2
    assert "error" in err

    code, _, _ = run_cli(
        capsys, ["simulate", "--kind", "osp", "--set", "run.replicas=lots"]
    )
    assert code == 2


def test_missing_config_file_exits_2(capsys):
    code, _, _ = run_cli(
        capsys, ["simulate", "--config", "/nonexistent/x.ini"]
    )
    assert code == 2


def test_phase_scan_table_and_figure(tmp_path, capsys):
    fig = tmp_path / "scan.png"
    argv = [
        "phase-scan", "--kind", "osp", "--dim", "1", *FAST,
        "--param", "p", "--values", "0.3,0.8", "--figure", str(fig),
    ]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    lines = [ln for ln in out.splitlines() if ln.strip()]
    assert lines[0].startswith("value\t")
    assert len(lines) == 3
    assert lines[1].startswith("0.3\t")
    assert fig.exists() and fig.stat().st_size > 0


def test_diagnose_ok_exit_0(capsys):
    code, out, _ = run_cli(
        capsys,
        ["diagnose", "--kind", "osp", "--dim", "1", "--p", "0.8", *FAST],
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["ok"] is True


def test_diagnose_desynced_model_exit_3(capsys, monkeypatch):
    cfg = ExperimentConfig(kind="osp", dim=1, params={"p": 0.8})
    model_cls = type(cfg.build())
    true_entry = model_cls.matrix_entry

    def skewed(self, stream, t, x, y):
        return true_entry(self, stream, t + 1, x, y)

    monkeypatch.setattr(model_cls, "matrix_entry", skewed)
    code, out, err = run_cli(
        capsys,
        ["diagnose", "--kind", "osp", "--dim", "1", "--p", "0.8", *FAST],
    )
    assert code == 3
    assert json.loads(out)["ok"] is False
    assert "diagnostic failure" in err


def test_oracle_verify_reports_matches(capsys):
    argv = [
        "oracle-verify", "--kind", "gosp", "--p", "0.55", "--q", "0.3",
        "--seed", "11", "--seeds", "3", "--t", "3",
    ]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    assert "# matched 3/3" in out
    assert out.count(": ok") == 3


def test_report_round_trip(tmp_path, capsys):
    argv = [
        "simulate", "--kind", "osp", "--p", "0.8", "--t-max", "40",
        "--replicas", "8", "--seed", "4", "--workers", "1",
        "--out", str(tmp_path), "--label", "rt", "--trace",
    ]
    assert run_cli(capsys, argv)[0] == 0

    out_dir = tmp_path / "figs"
    code, out, err = run_cli(
        capsys,
        ["report", "--run", str(tmp_path / "rt.jsonl"), "--out", str(out_dir)],
    )
    assert code == 0
    agg = json.loads(out)
    assert agg["n"] == 8
    assert (out_dir / "rt-reaggregated.csv").exists()
    pngs = list(out_dir.glob("rt-*.png"))
    assert len(pngs) >= 3
    assert all(p.stat().st_size > 0 for p in pngs)


def test_report_missing_run_exits_4(capsys):
    code, _, err = run_cli(capsys, ["report", "--run", "/nonexistent/x.jsonl"])
    assert code == 4
    assert "i/o error" in err
