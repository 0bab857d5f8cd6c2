#!/usr/bin/env python3
"""Reference long runs behind the pinned budgets in the test suite.

Reports, per seed, the first generation/step at which each convergence
criterion is met. Rerun after touching optimizer internals to confirm the
pinned budgets (sphere 400 generations, ellipsoid 600, Adam 5000 steps)
still hold with margin.
"""
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from embedopt.adam import Adam, AdamParams
from embedopt.sepcma import SepCmaEs


def first_hit_sepcma(fn, d, seeds, max_gens):
    for seed in seeds:
        es = SepCmaEs(np.full(d, 3.0), 0.5, 20, seed=seed)
        best, hit = -np.inf, None
        for t in range(max_gens):
            candidates, steps = es.ask()
            values = [fn(c.data) for c in candidates]
            es.tell(candidates, steps, values)
            best = max(best, max(values))
            if hit is None and best > -1e-6:
                hit = t + 1
                break
        yield seed, hit, best


def main():
    seeds = range(8)
    print("sphere -||z||^2, d=16, lambda=20, sigma0=0.5 (pinned budget: 400)")
    for seed, hit, best in first_hit_sepcma(
            lambda z: -float(np.dot(z, z)), 16, seeds, 400):
        print(f"  seed {seed}: hit at generation {hit} (best {best:.2e})")

    d = 16
    coef = 10.0 ** (6.0 * np.arange(d) / (d - 1))
    print("ellipsoid, condition 1e6, d=16 (pinned budget: 600)")
    for seed, hit, best in first_hit_sepcma(
            lambda z: -float(np.dot(coef, z**2)), d, seeds, 600):
        print(f"  seed {seed}: hit at generation {hit} (best {best:.2e})")

    print("Adam on L=||z||^2/2, d=8, z0=1, alpha=5e-3 (pinned budget: 5000 steps)")
    opt = Adam(np.ones(8), AdamParams(weight_decay=0.0))
    hit = None
    for t in range(5000):
        opt.step(opt.z.copy())
        if hit is None and np.max(np.abs(opt.z)) < 1e-2:
            hit = t + 1
    print(f"  first step with ||z||_inf < 1e-2: {hit}; "
          f"at 5000 steps: {np.max(np.abs(opt.z)):.2e}")


if __name__ == "__main__":
    main()
