#!/usr/bin/env python3
"""Run the full comparison protocol on the deterministic mock backend:
36 prompts x 3 fitness presets, sep-CMA-ES (100 generations, population 20)
against Adam under an equal evaluation budget. Writes one run directory per
preset and prints the comparison rows.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from embedopt.backend import MockBackend
from embedopt.core import FitnessConfig
from embedopt.harness import (BackendPromptSource, BudgetPolicy,
                              OptimizerSettings, load_prompts, run_experiment)

PRESETS = {"aesthetic": (1.0, 0.0), "balanced": (0.5, 0.5), "alignment": (0.0, 1.0)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs", help="parent directory for run outputs")
    ap.add_argument("--prompt-file", default="prompts/parti36.txt")
    ap.add_argument("--dim", type=int, default=64, help="mock embedding dimension")
    ap.add_argument("--generations", type=int, default=100)
    ap.add_argument("--lam", type=int, default=20)
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--similarity", action="store_true",
                    help="also render images and compute divergence metrics")
    args = ap.parse_args()

    prompts = load_prompts(args.prompt_file)
    for name, (a, b) in PRESETS.items():
        source = BackendPromptSource(MockBackend(shape=(args.dim,)),
                                     FitnessConfig(a=a, b=b))
        optimizers = [
            OptimizerSettings(kind="sep-cmaes",
                              budget=BudgetPolicy("generations", args.generations),
                              lam=args.lam, sigma0=args.sigma),
            OptimizerSettings(kind="adam",
                              budget=BudgetPolicy("evaluations",
                                                  args.generations * args.lam)),
        ]
        out_dir = Path(args.out) / name
        result = run_experiment(prompts, source, optimizers, seed=args.seed,
                                out_dir=out_dir,
                                compute_similarity=args.similarity)
        print(f"--- preset {name} (a={a}, b={b}) -> {out_dir}")
        for row in result.report_rows:
            print(f"  {row.optimizer_id:10s} aesthetic {row.aesthetic_mean:6.2f} "
                  f"clip {row.clip_mean:7.4f} fitness {row.fitness_mean:7.4f} "
                  f"({row.fitness_pct:+6.2f}%) wins {row.wins}")


if __name__ == "__main__":
    main()
