"""
lpkinetic
=========

Anisotropic Littlewood-Paley tools, kinetic alpha-stable kernels, degenerate
stable SDE flows and a Picard solver, with a registry of numerical
experiments that measure the decay rates these objects obey.

Modules
-------
lp_core      dyadic blocks, Besov/Zygmund norms, paraproducts
kernels      Gaussian and kinetic stable kernels, shear, nonlocal operator
estimates    block integrals, commutators, Theta sets, Duhamel solver
stable_sim   stable samplers and compensated small jumps
sde_flow     degenerate SDE, flows, random ODE and transport
picard       jump map, Feynman-Kac and Picard iteration
"""
__version__ = "0.1.0"
