"""Run every recipe into results/<recipe>/ and report an overall verdict."""

import sys
import time

from fixedrank.experiments import RECIPES, run_recipe

failed = []
for name in RECIPES:
    t = time.perf_counter()
    result = run_recipe(name, f"results/{name}", seed=0)
    print(f"{name}: {'PASS' if result.passed else 'FAIL'} ({time.perf_counter() - t:.1f} s)")
    for check in result.checks:
        print("  " + check.line())
    if not result.passed:
        failed.append(name)
sys.exit(4 if failed else 0)
