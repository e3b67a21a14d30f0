"""Run one experiment recipe and print its checks.

    python3 scripts/run_experiment.py scheme-order --out-dir results/scheme-order --seed 0
"""

import argparse
import sys

from fixedrank.experiments import RECIPES, run_recipe

parser = argparse.ArgumentParser()
parser.add_argument("recipe", choices=sorted(RECIPES))
parser.add_argument("--out-dir", default=None)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--parallel", action="store_true")
args = parser.parse_args()

result = run_recipe(args.recipe, args.out_dir or f"results/{args.recipe}", args.seed, parallel=args.parallel)
for check in result.checks:
    print(check.line())
sys.exit(0 if result.passed else 4)
