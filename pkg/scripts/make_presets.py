"""Regenerate the bundled pipeline presets in src/faultflow/presets/.

One preset per displacement bucket, each with and without temporal
perturbations. Run from the repository root::

    python scripts/make_presets.py
"""
from pathlib import Path

from faultflow.core import RangeBucket
from faultflow.estimate import EstimatorConfig
from faultflow.io import save_config
from faultflow.pipeline import PipelineConfig
from faultflow.simulate import FaultSpec, PerturbationSpec, SimulationSpec

OUT = Path(__file__).resolve().parents[1] / "src" / "faultflow" / "presets"

VERY_SMALL = FaultSpec(x=128.0, y=128.0, angle=1.2, slip=1.6, locking_depth=2.0)
SMALL = FaultSpec(x=128.0, y=128.0, angle=1.2, slip=6.0, locking_depth=3.0)
MEDIUM = FaultSpec(x=120.0, y=136.0, angle=0.5, slip=20.0, locking_depth=4.0)

# sub-pixel faults are matched densely (grid_step=1); the perturbed variant
# keeps changes mild so the estimate stays in the sub-pixel regime
MILD = PerturbationSpec(gaussian_sigma=0.005, brightness_gradient=0.05, blotch_count=3, blotch_size=10.0)
HARSH = PerturbationSpec(
    gaussian_sigma=0.01, brightness_gradient=0.1, patch_count=2, patch_size=16, blotch_count=4, blotch_size=10.0
)


def preset(fault, bucket, perturbations=PerturbationSpec(), estimator=EstimatorConfig()):
    sim = SimulationSpec(faults=(fault,), perturbations=perturbations, expected_bucket=bucket)
    return PipelineConfig(simulation=sim, estimator=estimator)


PRESETS = {
    "very_small_clean": preset(VERY_SMALL, RangeBucket.VerySmall, estimator=EstimatorConfig(grid_step=1)),
    "very_small_perturbed": preset(VERY_SMALL, RangeBucket.VerySmall, MILD, EstimatorConfig(grid_step=1)),
    "small_clean": preset(SMALL, RangeBucket.Small),
    "small_perturbed": preset(SMALL, RangeBucket.Small, HARSH),
    # single level on purpose: a 4 px search must be extended by refinement
    "medium_shift": preset(MEDIUM, RangeBucket.Medium, estimator=EstimatorConfig(pyramid_levels=1)),
    "medium_perturbed": preset(MEDIUM, RangeBucket.Medium, HARSH),
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, cfg in PRESETS.items():
        save_config(OUT / f"{name}.json", cfg)
        print(OUT / f"{name}.json")


if __name__ == "__main__":
    main()
