"""Near-fault versus non-fault smoothness for every preset.

Prints the ground-truth reference, each refinement iterate and the
regularized field, as stored in the pipeline report::

    python scripts/smoothness_by_region.py [presets ...]
"""
import sys

from faultflow.pipeline import load_preset, preset_names, run_pipeline


def fmt(x):
    return f"{'n/a':>9}" if x is None else f"{x:>9.5f}"


def main(names):
    print(f"{'preset':<22} {'bucket':<11} {'estimate':<24} {'regularizer':<28} {'epe':>8} {'near':>9} {'non':>9}")
    for name in names or preset_names():
        res = run_pipeline(load_preset(name))
        for r in res.reports:
            print(
                f"{name:<22} {r.bucket:<11} {r.estimator_name:<24} {r.regularizer_name:<28} "
                f"{r.epe:>8.4f} {fmt(r.smoothness_near_fault)} {fmt(r.smoothness_non_fault)}"
            )


if __name__ == "__main__":
    main(sys.argv[1:])
