"""Refine the grid under a linear equation with a closed-form solution.

``dy = sigma y dx`` has ``y_t = y_0 exp(sigma x_{0,t})`` for a geometric
rough path, so the terminal error of the controlled Euler scheme can be
measured exactly.  Run: python3 demos/solver_convergence.py
"""

import math

import numpy as np

from roughstab import FbmSpec, RdeProblem, TimeGrid, affine_function, sample_fbm_rough, solve
from roughstab.attractor import sample_seeds
from roughstab.rde import zero_drift

sigma, top, levels = 0.5, 12, range(6, 13)
prob = RdeProblem(np.zeros((1, 1)), zero_drift(1), affine_function(np.full((1, 1, 1), sigma), np.zeros((1, 1))))

errors = np.zeros((20, len(levels)))
for s, seed in enumerate(sample_seeds(5, 20)):
    fine = sample_fbm_rough(FbmSpec(0.4, 1, seed, TimeGrid.uniform(0.0, 1.0, 2 ** top), lift_level=4))
    for j, k in enumerate(levels):
        rp = fine.subsample(np.arange(0, 2 ** top + 1, 2 ** (top - k)))
        sol = solve(prob, rp, [1.0], check_steps=False)
        errors[s, j] = abs(sol.values[-1, 0] - math.exp(sigma * (rp.first_level[-1, 0] - rp.first_level[0, 0])))

mean = errors.mean(axis=0)
for k, e in zip(levels, mean):
    print(f"n = 2^{k:<2d}  mean terminal error {e:.3e}")
slope = np.polyfit(list(levels), np.log2(mean), 1)[0]
print(f"empirical order {-slope:.3f}; the guaranteed rate at p = 2.5 is 3/p - 1 = 0.2")
