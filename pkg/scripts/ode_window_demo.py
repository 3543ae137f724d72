#!/usr/bin/env python3
"""Trace where the one-term oscillator approximation loses the PDE.

Compares u1 = a0 * exp(-i t |a0|^2 / eps) against the direct solve at times
t = eps^p for a decreasing ladder of powers p, showing the error climb from
negligible to order one as t leaves the validity window.
"""
import sys
import time
from pathlib import Path

from nlswkb.experiments import config_from_dict, run_experiment
from nlswkb.reporting import load_config_file, write_artifacts


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    config = config_from_dict(load_config_file(root / "configs" / "odewindow.json"))
    t0 = time.perf_counter()
    result = run_experiment(config)
    elapsed = time.perf_counter() - t0
    for row in result.report["per_eps"]:
        pairs = ", ".join(f"t={t:.3f}: {e:.3e}"
                          for t, e in zip(row["times"], row["errors"]))
        print(f"eps={row['eps']:<7g} L2 errors {pairs}")
    for v in result.report["verdicts"]:
        tag = "PASS" if v["passed"] else "FAIL"
        print(f"[{tag}] {v['name']}")
    paths = write_artifacts(result, root / "runs" / "odewindow")
    print(f"finished in {elapsed:.1f} s; report at {paths['report.json']}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
