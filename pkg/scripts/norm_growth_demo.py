#!/usr/bin/env python3
"""Show eps-oscillatory norm growth: homogeneous H^m norms scale like eps^-m.

Runs the direct solver across the eps grid, prints the compensated ratios
eps^m * |u(t)|_{H^m}, and evaluates the algebraic divergence exponent for the
configured (n, s, k) triple.
"""
import sys
import time
from pathlib import Path

from nlswkb.experiments import config_from_dict, run_experiment
from nlswkb.reporting import load_config_file, write_artifacts


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    config = config_from_dict(load_config_file(root / "configs" / "normgrowth.json"))
    t0 = time.perf_counter()
    result = run_experiment(config)
    elapsed = time.perf_counter() - t0
    for row in result.report["per_eps"]:
        comp = ", ".join(f"m={m}: {row['compensated'][m]:.4f}"
                         for m in config.m_orders)
        print(f"eps={row['eps']:<7g} compensated norms {comp}")
    print("divergence exponent:", result.report["exponents"])
    for v in result.report["verdicts"]:
        tag = "PASS" if v["passed"] else "FAIL"
        print(f"[{tag}] {v['name']}: {v['detail']}")
    paths = write_artifacts(result, root / "runs" / "normgrowth")
    print(f"finished in {elapsed:.1f} s; report at {paths['report.json']}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
