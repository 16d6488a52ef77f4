"""Sample a fractional Brownian rough path and look at its norms.

Run: python3 demos/norms_and_greedy.py
"""

import numpy as np

from roughstab import FbmSpec, TimeGrid, greedy_times, p_variation, rough_pvar_norm, sample_fbm_rough
from roughstab.gubinelli import sewing_constant
from roughstab.rough_core import max_chen_defect
from roughstab.variation import default_gamma, q_variation_second_level

p = 2.5
rp = sample_fbm_rough(FbmSpec(0.4, 2, 7, TimeGrid.uniform(0.0, 4.0, 512), lift_level=4))

# The second level comes from a finer piecewise-linear lift, so Chen's relation holds to rounding.
triples = np.sort(np.random.default_rng(0).integers(0, len(rp), (2000, 3)), axis=1)
print(f"max Chen defect over 2000 triples: {max_chen_defect(rp, triples):.2e}")

first = p_variation(rp.first_level, p, rp.grid)
second = q_variation_second_level(rp, p / 2)
print(f"p-variation of x:        {first.value:.4f} (maximizing partition has {len(first.witness)} points)")
print(f"q-variation of X:        {second.value:.4f}")
print(f"rough p-variation norm:  {rough_pvar_norm(rp, p):.4f}")

# Greedy times cut [0, 4] into pieces of rough norm gamma; the count is what the bounds grow with.
C_p = sewing_constant(p)
for C_g in (0.05, 0.2, 1.0):
    gam = default_gamma(C_p, C_g)
    part = greedy_times(rp, gam, p)
    note = "  (every grid step exceeds gamma: refine the grid)" if part.count == len(rp) - 1 else ""
    print(f"C_g = {C_g:<5} gamma = {gam:.4f}  N = {part.count:3d}  bound = {part.count_bound:.1f}{note}")
