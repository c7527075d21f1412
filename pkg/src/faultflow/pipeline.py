"""End-to-end experiment: simulate, estimate, refine, regularize, evaluate."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import platform
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as fio
from .core import DisplacementField, RegionMask
from .estimate import EstimatorConfig, make_estimator
from .metrics import MetricsReport, evaluate_run
from .refine import RefinementConfig, RefinementTrace, intermediate_loss, iterative_refine
from .regularize import RegularizerConfig, regularize_field
from .simulate import SimulationSpec, synthesize_pair

from . import __version__


@dataclass(frozen=True)
class EmitFlags:
    fields: bool = True
    rasters: bool = True
    profiles: bool = True
    report: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    simulation: SimulationSpec | None = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    output_dir: str | None = None
    emit: EmitFlags = field(default_factory=EmitFlags)


@dataclass
class PipelineResult:
    I1: object
    I2: object
    gt: DisplacementField
    near_fault: RegionMask
    trace: RefinementTrace
    regularized: DisplacementField
    reports: list[MetricsReport]
    loss_total: float
    loss_per_iteration: list[float]

    @property
    def raw(self) -> DisplacementField:
        return self.trace.final


def load_pipeline_config(path) -> PipelineConfig:
    return fio.load_config(path, PipelineConfig)


def preset_names():
    root = resources.files("faultflow") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset_path(name) -> Path:
    name = name[:-5] if name.endswith(".json") else name
    path = Path(str(resources.files("faultflow") / "presets" / f"{name}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no preset named {name!r}; available: {preset_names()}")
    return path


def load_preset(name) -> PipelineConfig:
    return load_pipeline_config(preset_path(name))


def with_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    sim = cfg.simulation
    tex = dataclasses.replace(sim.texture, seed=int(seed))
    return dataclasses.replace(cfg, simulation=dataclasses.replace(sim, texture=tex))


def regularizer_label(cfg: RegularizerConfig) -> str:
    return f"{cfg.penalty.kind.value}(lambda={cfg.lam:g},k={cfg.k})"


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> PipelineResult:
    """Run the whole experiment; write outputs when ``out_dir`` is given."""
    if cfg.simulation is None:
        raise fio.ConfigInvalid("pipeline config needs a 'simulation' section")
    I1, I2, gt, near = synthesize_pair(cfg.simulation)
    estimator = make_estimator(cfg.estimator)
    trace = iterative_refine(I1, I2, estimator, cfg.refinement)
    reg = regularize_field(trace.final, cfg.regularizer)
    total, per = intermediate_loss(trace, gt, cfg.refinement.gamma)

    name = estimator.__name__
    reports = [evaluate_run(gt, gt, near, "reference", "none")]
    for i, f in enumerate(trace.fields, start=1):
        reports.append(evaluate_run(f, gt, near, f"{name}/iter{i}", "none"))
    reports.append(evaluate_run(reg, gt, near, f"{name}/iter{len(trace)}", regularizer_label(cfg.regularizer)))
    result = PipelineResult(I1, I2, gt, near, trace, reg, reports, total, per)
    if out_dir is not None:
        write_outputs(result, cfg, Path(out_dir))
    return result


def _fault_profiles(cfg: PipelineConfig, fields):
    sim = cfg.simulation
    length = 0.5 * min(sim.height, sim.width)
    out = {}
    for k, f in enumerate(sim.faults):
        # perpendicular to the trace, centred on its anchor point
        for label, df in fields.items():
            try:
                rows = fio.extract_profile(df, (f.x, f.y), f.angle + math.pi / 2, length, 65)
            except fio.LineOutOfBounds:
                continue
            out[f"profile_fault{k}_{label}.csv"] = rows
    return out


def write_outputs(result: PipelineResult, cfg: PipelineConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, writer, *args):
        writer(out / name, *args)
        written.append(name)

    if cfg.emit.rasters:
        put("I1.ras", fio.write_raster, result.I1)
        put("I2.ras", fio.write_raster, result.I2)
        put("I1.pgm", fio.write_raster, result.I1)
        put("I2.pgm", fio.write_raster, result.I2)
    if cfg.emit.fields:
        put("df_gt.fld", fio.write_field, result.gt)
        put("near_fault.msk", fio.write_mask, result.near_fault)
        for i, f in enumerate(result.trace.fields, start=1):
            put(f"df_{i}.fld", fio.write_field, f)
        put("df_regularized.fld", fio.write_field, result.regularized)
    if cfg.emit.profiles and cfg.simulation.faults:
        fields = {"gt": result.gt, "estimate": result.trace.final, "regularized": result.regularized}
        for fname, rows in _fault_profiles(cfg, fields).items():
            put(fname, fio.write_profile, rows)
    if cfg.emit.report:
        loss = {
            "intermediate_loss": {
                "gamma": cfg.refinement.gamma,
                "per_iteration": result.loss_per_iteration,
                "total": result.loss_total,
            }
        }
        put("report.json", fio.write_report_json, result.reports, loss)
        put("report.csv", fio.write_report_csv, result.reports)
        put("intermediate_loss.csv", write_loss_csv, result.loss_per_iteration, result.loss_total)

    manifest = {
        "config": {**fio.to_jsonable(cfg), "version": fio.CONFIG_VERSION},
        "seed": cfg.simulation.texture.seed,
        "versions": _versions(),
        "outputs": {name: _sha256(out / name) for name in sorted(written)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_loss_csv(path, per_iteration, total):
    lines = ["iteration,mean_l1"]
    lines += [f"{i},{v:.9g}" for i, v in enumerate(per_iteration, start=1)]
    lines.append(f"total,{total:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    import numba
    import scipy

    return {
        "faultflow": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }
