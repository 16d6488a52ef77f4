"""From stability margins to a singleton pullback attractor.

An affine scalar equation with a small multiplicative part satisfies the
linear criterion; pulling a ball back from ever earlier times shrinks it
at rate about ``lambda_A``.  Run: python3 demos/pullback_attractor.py
"""

import numpy as np

from roughstab import FbmSpec, RdeProblem, StabilityParams, TimeGrid, affine_function, sample_fbm_rough
from roughstab.attractor import all_margins, equilibrium_drift, gamma_estimate, pullback_experiment, semigroup_constants
from roughstab.gubinelli import cosine_function
from roughstab.rde import sine_drift, zero_drift

prob = RdeProblem(-np.eye(1), zero_drift(1), affine_function(np.full((1, 1, 1), 2e-5), np.full((1, 1), 0.1)))
C_A, lam_A = semigroup_constants(prob.A)
gam, se = gamma_estimate(0.4, 2.5, 200, seed=1, lift_level=3, steps=64)
params = StabilityParams.from_problem(prob, C_A, lam_A, 2.5, gam, se)
print(f"C_A = {C_A}, lambda_A = {lam_A}, Gamma(2.5) = {gam:.3f} +- {se:.3f}")
for kind, margin in all_margins(params).items():
    print(f"  {kind:8s} margin {margin:+.4f}")

noise = sample_fbm_rough(FbmSpec(0.4, 1, 42, TimeGrid.uniform(-21.0, 0.0, 21 * 32), lift_level=3))
rep = pullback_experiment(prob, noise, [5, 10, 15, 20], 1.0, 2, 42, params, absorbing_horizon=20)
for h, d in zip(rep.horizons, rep.diameters):
    print(f"  pulled back from -{h:<4g} diameter {d:.3e}")
print(f"log-diameter rate {rep.rate:.3f}, singleton: {rep.singleton}, b_hat = {rep.absorbing['b_hat']:.3g}")

# Shrinking the noise coefficient moves the attractor point towards the deterministic equilibrium.
noise = sample_fbm_rough(FbmSpec(0.4, 1, 42, TimeGrid.uniform(-20.0, 0.0, 20 * 32), lift_level=3))
rows = equilibrium_drift(lambda c: RdeProblem(-np.eye(1), sine_drift(0.1, 1, 0.5), cosine_function(c, 1, 1)),
                         [0.0, 0.2, 0.1, 0.05, 0.025], noise, 20)
for row in rows:
    print(f"  C_g = {row['C_g']:<6g} distance to equilibrium {row['distance']:.3e}")
