"""
State-dependent jumps through a jump map, and the Picard scheme.

The jump map pushes the unit-kernel stable jump measure on the unit ball
forward to one weighted by kappa(x, .). The script:

1. Checks the change-of-variables identity for a modulated kernel.
2. Solves the equation on a small torus grid. Small jumps are handled by a
   Feynman-Kac SDE whose jumps go through the map. Large jumps are handled
   by Picard iteration.
3. Prints the contraction ratios of the iteration.
"""
import numpy as np

from lpkinetic.picard import KERNELS, SOURCES, JumpMapSpec, PicardConfig, identity_battery, jump_map_phi, picard_solve

spec = JumpMapSpec(1.5, KERNELS["modulated"].kappa)
for z in (0.01, 0.1, 0.5):
    print("Phi(x=0.3, z=%.2f) = %.5f" % (z, jump_map_phi(spec, 0.3, z)))
for name, (lhs, rhs, rel) in identity_battery(spec).items():
    print("  identity %-16s pushed %.10f  weighted %.10f  rel %.1e" % (name, lhs, rhs, rel))

cfg = PicardConfig(n_grid=7, n_paths=4000, n_steps=16, max_iter=6)
res = picard_solve(cfg, SOURCES["mixed"])
print("Picard sup differences:", " ".join("%.2e" % d for d in res.sup_diff))
print("ratios:", " ".join("%.3f" % r for r in res.ratios), " converged:", res.converged)
print("Monte Carlo standard error (max over nodes) %.1e" % res.noise_level)
