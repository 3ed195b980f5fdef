"""
Dyadic blocks of a Weierstrass-type field.

A lacunary cosine series with amplitudes 2^{-beta k} has Holder order beta.
Its block sups decay like 2^{-beta j}, the Besov norm of order beta stays
finite, and the difference-based Zygmund norm agrees with it up to a
constant. The script prints the block profile and both norms.
"""
import numpy as np

from lpkinetic.estimates import fit_slope, lacunary_field
from lpkinetic.lp_core import AnisotropyIndex, GridSpec, besov_norm, block_profile, build_partition, zygmund_norm

beta = 0.6
grid = GridSpec((np.pi,), (2 ** 12,))
part = build_partition(AnisotropyIndex.isotropic(1), grid, 10)
f = lacunary_field(grid, beta, 12, phases=False)

prof = block_profile(f, part)
print("block sups of a lacunary field with beta = %.2f" % beta)
for j, s in enumerate(prof.sups):
    print("  j = %2d   sup|R_j f| = %.3e" % (j, s))
js = np.arange(2, 10)
fit = fit_slope(js, np.asarray(prof.sups)[js])
print("fitted decay exponent %.3f (expected %.3f)" % (-fit.slope, beta))

b = besov_norm(f, beta, part)[0]
z = zygmund_norm(f, beta, AnisotropyIndex.isotropic(1))
print("Besov norm %.3f, Zygmund norm %.3f, ratio %.2f" % (b, z, z / b))
