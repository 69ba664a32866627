import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from wavesrc import cli, pipeline
from wavesrc.config import PROFILES, SCHEMA_VERSION, RunConfig, SweepConfig
from wavesrc.errors import ConfigError, NumericalError, StageError
from wavesrc.forward import CauchyRecord
from wavesrc.pipeline import ARTIFACTS, INCOMPLETE, clear_operator_cache, run_pipeline, run_sweep

TINY = ["--inverse-n", "6", "--n-t", "8", "--fine-n", "31"]


def test_run_writes_exact_artifact_set(tiny_config):
    res = run_pipeline(tiny_config)
    out = Path(tiny_config.output_dir)
    assert sorted(p.name for p in out.iterdir()) == sorted(ARTIFACTS)
    assert res.status == 0 and res.report["status"] == "ok"
    assert res.p_comp.shape == (6, 6) and res.w.shape == (6, 6, 8)
    np.testing.assert_array_equal(np.load(out / "w.npy"), res.w)
    report = json.loads((out / "report.json").read_text())
    assert report["config"] == tiny_config.to_dict()
    assert set(json.loads((out / "timing.json").read_text())["stages"]) >= {"synthesize", "solve"}


def test_write_false_touches_nothing(tiny_config):
    run_pipeline(tiny_config, write=False)
    assert not Path(tiny_config.output_dir).exists()


def test_report_bytes_deterministic(tiny_config):
    cfg = tiny_config.replace(delta=0.05, seed=7)
    report = Path(cfg.output_dir) / "report.json"
    run_pipeline(cfg)
    first = report.read_bytes()
    clear_operator_cache()
    run_pipeline(cfg)
    assert report.read_bytes() == first


def test_config_echo_reproduces_report(tiny_config, tmp_path):
    cfg = tiny_config.replace(delta=0.02, seed=3, test=2)
    first = run_pipeline(cfg).report
    echoed = RunConfig.load(Path(cfg.output_dir) / "config.yaml")
    assert echoed == cfg
    again = run_pipeline(RunConfig.from_dict(first["config"]), write=False).report
    assert json.dumps(again, sort_keys=True) == json.dumps({k: v for k, v in first.items()
                                                            if k not in ("image", "artifacts")}, sort_keys=True)


def test_record_input_matches_synthesis(tiny_config, tmp_path):
    cfg = tiny_config.replace(delta=0.02, seed=1)
    res = run_pipeline(cfg)
    rec = CauchyRecord.from_csv(Path(cfg.output_dir) / "cauchy.csv")
    again = run_pipeline(cfg.replace(output_dir=str(tmp_path / "r")), record=rec)
    np.testing.assert_array_equal(again.p_comp, res.p_comp)


def test_mismatched_record_rejected(tiny_config):
    rec = pipeline.synthesize(tiny_config.replace(inverse_n=7))
    with pytest.raises(StageError) as ei:
        run_pipeline(tiny_config, record=rec)
    assert ei.value.stage == "differentiate"


def test_stage_failure_leaves_marker(tiny_config):
    bad = tiny_config.replace(fine_n=301)  # violates CFL on the fine grid
    with pytest.raises(StageError) as ei:
        run_pipeline(bad)
    assert ei.value.stage == "synthesize" and ei.value.exit_code == 2
    marker = Path(bad.output_dir) / INCOMPLETE
    assert "synthesize" in marker.read_text()


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"schema_version": 1, "eps_1": 1e-3})
    with pytest.raises(ConfigError, match="schema_version"):
        RunConfig.from_dict({"eps1": 1e-3})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"schema_version": 2})
    for kw in ({"eps1": 0.0}, {"eps2": -1.0}, {"delta": -0.1}, {"diff_eps": 0.0}, {"mode": "x"},
               {"profile": "huge"}, {"inverse_n": 2}):
        with pytest.raises(ConfigError):
            RunConfig(**kw)
    (tmp_path / "c.yaml").write_text("schema_version: 1\nprofile: full_scale\neps1: 0.01\n")
    cfg = RunConfig.load(tmp_path / "c.yaml")
    assert cfg.eps1 == 0.01 and cfg.inverse_n == PROFILES["full_scale"]["inverse_n"]
    assert cfg.resolved_solver == "cg"
    assert RunConfig().resolved_solver == "direct"
    (tmp_path / "bad.yaml").write_text("schema_version: [1\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.yaml")


def test_operator_key_tracks_operator_fields():
    cfg = RunConfig()
    assert cfg.operator_key() == cfg.replace(delta=0.1, seed=4, diff_eps=2.0).operator_key()
    assert cfg.operator_key() != cfg.replace(eps1=1e-2).operator_key()
    assert cfg.operator_key() != cfg.replace(mode="paper_simplified").operator_key()


def test_dump_load_roundtrip(tmp_path):
    cfg = RunConfig(test=3, extent=(-1, 1, -1, 1), source={"kind": "peaks", "amplitude": 2.0})
    cfg.dump(tmp_path / "c.yaml")
    assert RunConfig.load(tmp_path / "c.yaml") == cfg


def test_sweep_writes_rows_and_summary(tiny_config, tmp_path):
    cfgs = [tiny_config.replace(delta=d, seed=s) for d in (0.0, 0.05) for s in (0, 1, 2)]
    cfgs.append(tiny_config.replace(fine_n=301))
    rows, summary = run_sweep(cfgs, tmp_path / "sw", workers=2)
    assert len(rows) == 7 and rows[-1]["status"].startswith("failed")
    with open(tmp_path / "sw" / "runs.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 7
    with open(tmp_path / "sw" / "summary.csv") as fh:
        summ = list(csv.DictReader(fh))
    assert len(summ) == 3
    noisy = next(s for s in summary if s["delta"] == 0.05)
    vals = [r["l2_rel"] for r in rows if r["delta"] == 0.05]
    assert noisy["runs"] == 3 and noisy["failed"] == 0
    assert noisy["l2_rel_mean"] == pytest.approx(np.mean(vals))
    assert noisy["l2_rel_std"] == pytest.approx(np.std(vals, ddof=1))
    assert summary[-1]["failed"] == 1


def test_single_run_sweep_equals_pipeline(tiny_config, tmp_path):
    rows, _ = run_sweep([tiny_config], tmp_path / "one")
    assert rows[0]["l2_rel"] == run_pipeline(tiny_config, write=False).report["metrics"]["l2_rel"]


def test_eps1_robustness_sweep(tiny_config, tmp_path):
    sweep = SweepConfig(tiny_config.replace(delta=0.05), {"eps1": [3e-2, 3e-3, 3e-4]})
    rows, summary = run_sweep(sweep.expand(), tmp_path / "eps")
    assert [r["status"] for r in rows] == ["ok"] * 3
    assert all(np.isfinite(r["l2_rel"]) for r in rows)
    assert sorted(s["eps1"] for s in summary) == [3e-4, 3e-3, 3e-2]


def test_empty_sweep():
    with pytest.raises(ConfigError):
        run_sweep([], "unused")


def test_sweep_config_file(tmp_path):
    (tmp_path / "s.yaml").write_text(yaml.safe_dump({
        "base": {"schema_version": SCHEMA_VERSION, "inverse_n": 6, "n_t": 8, "fine_n": 31},
        "axes": {"delta": [0.0, 0.02], "seed": [0, 1]}, "workers": 2}))
    sw = SweepConfig.load(tmp_path / "s.yaml")
    assert sw.workers == 2 and len(sw.expand()) == 4
    (tmp_path / "bad.yaml").write_text("axes: {eps_one: [1]}\n")
    with pytest.raises(ConfigError):
        SweepConfig.load(tmp_path / "bad.yaml")


def test_cli_reconstruct_and_inspect(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["reconstruct", *TINY, "--delta", "0.02", "--output-dir", str(out)]) == 0
    assert (out / "report.json").exists()
    assert cli.main(["inspect", str(out / "report.json")]) == 0
    text = capsys.readouterr().out
    assert "L2 error" in text and "solver" in text


def test_cli_config_file_and_override(tmp_path):
    cfg = RunConfig(inverse_n=6, n_t=8, fine_n=31, seed=5, output_dir=str(tmp_path / "a"))
    cfg.dump(tmp_path / "c.yaml")
    assert cli.main(["reconstruct", "--config", str(tmp_path / "c.yaml"), "--seed", "6"]) == 0
    assert json.loads((tmp_path / "a" / "report.json").read_text())["seed"] == 6


def test_cli_synthesize_differentiate_reconstruct(tmp_path):
    cauchy = tmp_path / "c.csv"
    assert cli.main(["synthesize", *TINY, "--delta", "0.02", "--out", str(cauchy)]) == 0
    assert cli.main(["differentiate", str(cauchy), "--out", str(tmp_path / "tt.csv")]) == 0
    head = json.loads((tmp_path / "tt.csv").read_text().splitlines()[0][2:])
    assert head["format"] == "wavesrc-cauchy-tt/1" and head["diff_eps"] == 1.0
    data = np.loadtxt(tmp_path / "tt.csv", delimiter=",", skiprows=2)
    assert data.shape == (20 * 8, 4)
    out = tmp_path / "r"
    assert cli.main(["reconstruct", *TINY, "--cauchy", str(cauchy), "--output-dir", str(out)]) == 0
    assert (out / "p_comp.csv").exists()


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["reconstruct", *TINY, "--eps1", "-1", "--output-dir", str(tmp_path / "x")]) == 2
    assert cli.main(["reconstruct", *TINY, "--fine-n", "301", "--output-dir", str(tmp_path / "y")]) == 2
    assert (tmp_path / "y" / INCOMPLETE).exists()
    assert cli.main(["inspect", str(tmp_path / "missing.json")]) == 2
    code = cli.main(["reconstruct", *TINY, "--solver", "cg", "--cg-max-iters", "2", "--output-dir",
                     str(tmp_path / "z")])
    assert code == 4
    assert json.loads((tmp_path / "z" / "report.json").read_text())["status"] == "not_converged"

    def broken(M, rhs):
        raise NumericalError("matrix not positive definite: pivot 1")

    monkeypatch.setattr(pipeline, "dense_solve", broken)
    assert cli.main(["reconstruct", *TINY, "--solver", "dense", "--output-dir", str(tmp_path / "w")]) == 3
    assert "stage 'solve'" in capsys.readouterr().err


def test_cli_sweep(tmp_path):
    (tmp_path / "s.yaml").write_text(yaml.safe_dump({
        "base": {"schema_version": SCHEMA_VERSION, "inverse_n": 6, "n_t": 8, "fine_n": 31},
        "axes": {"seed": [0, 1]}}))
    assert cli.main(["sweep", str(tmp_path / "s.yaml"), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "summary.csv").exists()
