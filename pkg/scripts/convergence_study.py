#!/usr/bin/env python3
"""Run the convergence study for one regime and print the fitted slopes.

Usage: python3 scripts/convergence_study.py [critical|subcritical|supercritical|corrector|skewfree]
"""
import sys
import time
from pathlib import Path

from nlswkb.experiments import config_from_dict, run_experiment
from nlswkb.reporting import load_config_file, write_artifacts

CONFIGS = {
    "critical": "critical.json",
    "subcritical": "subcritical.json",
    "supercritical": "supercritical.json",
    "corrector": "corrector.json",
    "skewfree": "skewfree.json",
}


def main() -> int:
    regime = sys.argv[1] if len(sys.argv) > 1 else "supercritical"
    if regime not in CONFIGS:
        print(f"unknown regime {regime!r}; pick one of {sorted(CONFIGS)}")
        return 2
    root = Path(__file__).resolve().parent.parent
    config = config_from_dict(load_config_file(root / "configs" / CONFIGS[regime]))
    t0 = time.perf_counter()
    result = run_experiment(config)
    elapsed = time.perf_counter() - t0
    for v in result.report["verdicts"]:
        tag = "PASS" if v["passed"] else "FAIL"
        print(f"[{tag}] {v['name']}: {v['detail']}")
    paths = write_artifacts(result, root / "runs" / f"converge_{regime}")
    print(f"{regime} study finished in {elapsed:.1f} s; report at {paths['report.json']}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
