import json
import subprocess
import sys

import numpy as np
import pytest

from faultflow import io as fio
from faultflow.cli import main
from faultflow.core import DisplacementField
from faultflow.pipeline import PipelineConfig
from faultflow.regularize import RegularizerConfig
from faultflow.simulate import FaultSpec, SimulationSpec


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    spec = SimulationSpec(64, 64, faults=(FaultSpec(32, 32, 1.0, 2.0, 2.0),))
    fio.save_config(d / "spec.json", spec)
    assert main(["--quiet", "simulate", str(d / "spec.json"), str(d / "out")]) == 0
    return d


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_simulate_outputs(sim_dir):
    names = set(tree(sim_dir / "out"))
    assert {"I1.ras", "I2.ras", "I1.pgm", "I2.pgm", "df_gt.fld", "near_fault.msk"} <= names


def test_estimate_and_refine(sim_dir, tmp_path):
    o = sim_dir / "out"
    assert main(["--quiet", "estimate", str(o / "I1.ras"), str(o / "I2.ras"), str(tmp_path / "e.fld")]) == 0
    assert fio.read_field(tmp_path / "e.fld").shape == (64, 64)
    rc = main(["--quiet", "refine", str(o / "I1.ras"), str(o / "I2.ras"), str(tmp_path / "r"), "--gt", str(o / "df_gt.fld")])
    assert rc == 0
    assert {"df_1.fld", "df_2.fld", "df_3.fld", "intermediate_loss.csv"} <= set(tree(tmp_path / "r"))


def test_regularize_lambda_zero_is_identity(sim_dir, tmp_path):
    cfg = tmp_path / "c.json"
    fio.save_config(cfg, PipelineConfig(regularizer=RegularizerConfig(lam=0.0)))
    src = sim_dir / "out" / "df_gt.fld"
    assert main(["--quiet", "--config", str(cfg), "regularize", str(src), str(tmp_path / "r.fld")]) == 0
    assert (tmp_path / "r.fld").read_bytes() == src.read_bytes()


@pytest.mark.parametrize("suffix", [".json", ".csv"])
def test_evaluate_self_is_zero(sim_dir, tmp_path, suffix):
    o = sim_dir / "out"
    rep = tmp_path / f"rep{suffix}"
    assert main(["--quiet", "evaluate", str(o / "df_gt.fld"), str(o / "df_gt.fld"), str(o / "near_fault.msk"), str(rep)]) == 0
    if suffix == ".json":
        assert fio.read_report_json(rep)[0]["epe"] == 0.0
    else:
        head, row = rep.read_text().splitlines()
        assert dict(zip(head.split(","), row.split(",")))["epe"] == "0"


def test_profile(sim_dir, tmp_path):
    f = sim_dir / "out" / "df_gt.fld"
    args = ["--quiet", "profile", str(f), str(tmp_path / "p.csv"), "--x", "32", "--y", "32", "--angle", "0.3", "--length", "20", "--samples", "5"]
    assert main(args) == 0
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 6


def test_missing_file_exit_3(tmp_path, capsys):
    assert main(["regularize", str(tmp_path / "nope.fld"), str(tmp_path / "x.fld")]) == 3
    err = capsys.readouterr().err.strip()
    assert err.startswith("faultflow: error:") and "\n" not in err


def test_bad_format_exit_3(tmp_path):
    (tmp_path / "junk.fld").write_bytes(b"garbage!" * 4)
    assert main(["--quiet", "regularize", str(tmp_path / "junk.fld"), str(tmp_path / "x.fld")]) == 3


def test_invalid_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1, "regularizer": {"lambda": -1}}))
    fio.write_field(tmp_path / "z.fld", DisplacementField.zeros(4, 4))
    assert main(["--config", str(cfg), "regularize", str(tmp_path / "z.fld"), str(tmp_path / "o.fld")]) == 2
    assert len(capsys.readouterr().err.strip().splitlines()) == 1


def test_unknown_preset_exit_2(tmp_path):
    assert main(["--quiet", "pipeline", "--preset", "nope", "--out", str(tmp_path)]) == 2


def test_pipeline_rerun_from_manifest(tmp_path):
    spec = SimulationSpec(64, 64, faults=(FaultSpec(32, 32, 1.0, 1.5, 2.0),))
    cfg = tmp_path / "p.json"
    fio.save_config(cfg, PipelineConfig(simulation=spec))
    assert main(["--quiet", "pipeline", str(cfg), "--out", str(tmp_path / "a")]) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert manifest.exists()
    assert main(["--quiet", "--threads", "1", "pipeline", str(manifest), "--out", str(tmp_path / "b")]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_seed_override_changes_images(tmp_path):
    spec = SimulationSpec(32, 32, faults=(FaultSpec(16, 16, 1.0, 1.5, 2.0),))
    fio.save_config(tmp_path / "s.json", spec)
    main(["--quiet", "simulate", str(tmp_path / "s.json"), str(tmp_path / "a")])
    main(["--quiet", "--seed-override", "9", "simulate", str(tmp_path / "s.json"), str(tmp_path / "b")])
    assert (tmp_path / "a" / "I1.ras").read_bytes() != (tmp_path / "b" / "I1.ras").read_bytes()
    assert (tmp_path / "a" / "df_gt.fld").read_bytes() == (tmp_path / "b" / "df_gt.fld").read_bytes()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "faultflow.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "pipeline" in r.stdout
