"""Compare the L2-gradient, TV and log-TV penalties on the same estimate.

For each preset, the final refined field is regularized with every penalty
at a common lambda. The table lists EPE and smoothness in both regions::

    python scripts/penalty_comparison.py [--lam 0.001] [presets ...]
"""
import argparse
import dataclasses

from faultflow.metrics import epe, smoothness
from faultflow.pipeline import load_preset, preset_names, run_pipeline
from faultflow.regularize import PenaltyKind, PenaltySpec, regularize_field


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*")
    ap.add_argument("--lam", type=float, default=1e-3)
    args = ap.parse_args()

    print(f"{'preset':<22} {'penalty':<8} {'epe':>8} {'near':>9} {'non':>9}")
    for name in args.presets or preset_names():
        cfg = load_preset(name)
        res = run_pipeline(cfg)
        near = res.near_fault
        rows = [("raw", res.raw)]
        for kind in PenaltyKind:
            rc = dataclasses.replace(
                cfg.regularizer, lam=args.lam, penalty=PenaltySpec(kind, cfg.regularizer.penalty.epsilon)
            )
            rows.append((kind.value, regularize_field(res.raw, rc)))
        for label, f in rows:
            print(f"{name:<22} {label:<8} {epe(f, res.gt):>8.4f} {smoothness(f, near):>9.5f} {smoothness(f, ~near):>9.5f}")


if __name__ == "__main__":
    main()
