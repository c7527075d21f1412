"""Command-line driver: ``faultflow <command> ...``.

Every command reads its settings from a pipeline config (JSON, version 1);
a command only looks at the sections it needs, and any section left out
takes its defaults. Exit codes: 0 success, 2 validation error, 3 I/O or
file-format error. Failures print one line on stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import io as fio
from .core import ConfigInvalid, FaultflowError
from .estimate import make_estimator
from .metrics import evaluate_run
from .pipeline import (
    PipelineConfig,
    preset_names,
    preset_path,
    regularizer_label,
    run_pipeline,
    with_seed,
    write_loss_csv,
)
from .refine import intermediate_loss, iterative_refine
from .regularize import regularize_field
from .simulate import SimulationSpec, synthesize_pair

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


class _Run:
    """Per-invocation state shared by the command handlers."""

    def __init__(self, args):
        self.args = args
        self.quiet = bool(getattr(args, "quiet", False))

    def say(self, msg):
        if not self.quiet:
            print(msg)

    def config(self, path=None) -> PipelineConfig:
        path = path or getattr(self.args, "config", None)
        cfg = load_config_any(path) if path else PipelineConfig()
        seed = getattr(self.args, "seed_override", None)
        if seed is not None and cfg.simulation is not None:
            cfg = with_seed(cfg, seed)
        return cfg

    def out_dir(self, positional=None) -> Path:
        out = positional or getattr(self.args, "out", None)
        if out is None:
            raise ConfigInvalid("an output location is required (positional argument or --out)")
        return Path(out)


def load_config_any(path) -> PipelineConfig:
    """Load a pipeline config, a bare simulation spec, or a run manifest."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict) and {"config", "outputs"} <= set(data):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: top level must be an object")
    data = dict(data)
    version = data.pop("version", None)
    if version != fio.CONFIG_VERSION:
        raise ConfigInvalid(f"{path}: expected version {fio.CONFIG_VERSION}, got {version!r}")
    sections = {f.name for f in dataclasses.fields(PipelineConfig)}
    if data and not set(data) & sections:
        # a bare SimulationSpec
        return PipelineConfig(simulation=fio.from_jsonable(SimulationSpec, data))
    return fio.from_jsonable(PipelineConfig, data)


def _need_simulation(cfg):
    if cfg.simulation is None:
        raise ConfigInvalid("config has no 'simulation' section")
    return cfg.simulation


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(run: _Run):
    a = run.args
    cfg = run.config(a.spec)
    out = run.out_dir(a.out_dir)
    I1, I2, gt, near = synthesize_pair(_need_simulation(cfg))
    out.mkdir(parents=True, exist_ok=True)
    fio.write_raster(out / "I1.ras", I1)
    fio.write_raster(out / "I2.ras", I2)
    fio.write_raster(out / "I1.pgm", I1)
    fio.write_raster(out / "I2.pgm", I2)
    fio.write_field(out / "df_gt.fld", gt)
    fio.write_mask(out / "near_fault.msk", near)
    run.say(f"wrote I1, I2, df_gt, near_fault to {out}")


def cmd_estimate(run: _Run):
    a = run.args
    cfg = run.config()
    I1 = fio.read_raster(a.I1)
    I2 = fio.read_raster(a.I2)
    df = make_estimator(cfg.estimator)(I1, I2)
    out = run.out_dir(a.output)
    fio.write_field(out, df)
    run.say(f"wrote {out}")


def cmd_refine(run: _Run):
    a = run.args
    cfg = run.config()
    I1 = fio.read_raster(a.I1)
    I2 = fio.read_raster(a.I2)
    gt = fio.read_field(a.gt) if a.gt else None
    out = run.out_dir(a.out_dir)
    trace = iterative_refine(I1, I2, make_estimator(cfg.estimator), cfg.refinement)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(trace.fields, start=1):
        fio.write_field(out / f"df_{i}.fld", f)
    if gt is not None:
        total, per = intermediate_loss(trace, gt, cfg.refinement.gamma)
        write_loss_csv(out / "intermediate_loss.csv", per, total)
    run.say(f"wrote {len(trace)} fields to {out}")


def cmd_regularize(run: _Run):
    a = run.args
    cfg = run.config()
    df = fio.read_field(a.input)
    out = run.out_dir(a.output)
    fio.write_field(out, regularize_field(df, cfg.regularizer))
    run.say(f"wrote {out} ({regularizer_label(cfg.regularizer)})")


def cmd_evaluate(run: _Run):
    a = run.args
    est = fio.read_field(a.est)
    gt = fio.read_field(a.gt)
    near = fio.read_mask(a.mask)
    report = evaluate_run(est, gt, near, a.estimator_name, a.regularizer_name)
    out = run.out_dir(a.report)
    if out.suffix.lower() == ".csv":
        fio.write_report_csv(out, [report])
    else:
        fio.write_report_json(out, [report])
    run.say(f"epe {report.epe:.6g} -> {out}")


def cmd_profile(run: _Run):
    a = run.args
    df = fio.read_field(a.field)
    rows = fio.extract_profile(df, (a.x, a.y), a.angle, a.length, a.samples)
    out = run.out_dir(a.output)
    fio.write_profile(out, rows)
    run.say(f"wrote {len(rows)} samples to {out}")


def cmd_pipeline(run: _Run):
    a = run.args
    if a.preset and (a.pipeline_config or getattr(a, "config", None)):
        raise ConfigInvalid("give either a config file or --preset, not both")
    if a.preset:
        try:
            path = preset_path(a.preset)
        except FileNotFoundError:
            raise ConfigInvalid(f"unknown preset {a.preset!r}; available: {', '.join(preset_names())}") from None
        cfg = run.config(path)
    else:
        path = a.pipeline_config or getattr(a, "config", None)
        if path is None:
            raise ConfigInvalid("pipeline needs a config file or --preset")
        cfg = run.config(path)
    out = getattr(a, "out", None) or cfg.output_dir
    if out is None:
        raise ConfigInvalid("no output directory: pass --out or set output_dir in the config")
    result = run_pipeline(cfg, Path(out))
    for r in result.reports:
        run.say(
            f"{r.estimator_name:<24} {r.regularizer_name:<28} epe {r.epe:.4f}  "
            f"near {_fmt(r.smoothness_near_fault)}  non {_fmt(r.smoothness_non_fault)}"
        )
    run.say(f"outputs in {out}")


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


# ---------------------------------------------------------------------------
# argument parsing


def _common():
    # SUPPRESS keeps a subcommand's unset flag from hiding the global one
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="pipeline config JSON (sections used per command)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap the worker thread pool")
    p.add_argument("--seed-override", type=int, default=argparse.SUPPRESS, help="replace the texture seed")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="no progress output")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="faultflow",
        description="Synthesize, estimate, refine and regularize fault displacement fields.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize an image pair with ground truth")
    p.add_argument("spec", nargs="?", help="simulation spec or pipeline config (default: --config)")
    p.add_argument("out_dir", nargs="?")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="single-pass displacement estimate")
    p.add_argument("I1")
    p.add_argument("I2")
    p.add_argument("output", nargs="?", help="output .fld (default: --out)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("refine", parents=[common], help="iterative refinement with explicit warping")
    p.add_argument("I1")
    p.add_argument("I2")
    p.add_argument("out_dir", nargs="?")
    p.add_argument("--gt", help="ground-truth field; adds intermediate_loss.csv")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("regularize", parents=[common], help="a-posteriori denoising of a field")
    p.add_argument("input")
    p.add_argument("output", nargs="?")
    p.set_defaults(func=cmd_regularize)

    p = sub.add_parser("evaluate", parents=[common], help="EPE and smoothness report (.json or .csv)")
    p.add_argument("est")
    p.add_argument("gt")
    p.add_argument("mask", help="near-fault mask (.msk)")
    p.add_argument("report", nargs="?")
    p.add_argument("--estimator-name", default="")
    p.add_argument("--regularizer-name", default="")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("profile", parents=[common], help="sample u, v along a line to CSV")
    p.add_argument("field")
    p.add_argument("output", nargs="?")
    p.add_argument("--x", type=float, required=True, help="line centre, column")
    p.add_argument("--y", type=float, required=True, help="line centre, row")
    p.add_argument("--angle", type=float, required=True, help="radians from the +x axis")
    p.add_argument("--length", type=float, required=True)
    p.add_argument("--samples", type=int, default=65)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("pipeline", parents=[common], help="full experiment with manifest")
    p.add_argument("pipeline_config", nargs="?", help="pipeline config or run manifest")
    p.add_argument("--preset", help="bundled preset name (see README)")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _set_threads(n):
    import numba

    if n < 1:
        raise ConfigInvalid("--threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is not None:
            _set_threads(args.threads)
        args.func(_Run(args))
    except fio.FormatError as exc:
        return _fail(EXIT_IO, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except (FaultflowError, ValueError) as exc:
        return _fail(EXIT_INVALID, exc)
    return EXIT_OK


def _fail(code, exc):
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"faultflow: error: {type(exc).__name__}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
