"""
Stable noise, kinetic flows and random transport.

1. Draw one stable path and write it to CSV.
2. Run the kinetic SDE with a Holder drift over that noise. Restarting the
   flow at an intermediate time reproduces the direct solution, and the
   gaps between successive time steps shrink.
3. Solve the transport equation driven by the same kind of noise. The
   solution stays within the range of its initial datum, and its time-
   integrated residual decreases as the step is refined (the rate
   depends on the path; see the transport experiment).
"""
import os
import tempfile

import numpy as np

from lpkinetic.sde_flow import (SdeConfig, TransportProblem, flow_composition_check, pathwise_gaps,
                                solve_transport, transport_residual)
from lpkinetic.stable_sim import StableConfig, simulate_path

noise = StableConfig(1.5, seed=0)
path = simulate_path(noise, 1.0, 256, stream="demo")
out = os.path.join(tempfile.gettempdir(), "lpkinetic_demo_path.csv")
path.to_csv(out)
print("stable path: %d large jumps, L_1 = %.3f, written to %s"
      % (len(path.jump_times), path.values()[-1, 0], out))

cfg = SdeConfig("holder_xv", noise, dt=1 / 16)
gap = flow_composition_check(cfg, 0.0, 0.4375, 1.0, [0.2, -0.3], stream="demo")
print("flow composition defect %.1e" % gap)
gaps = pathwise_gaps(cfg, [0.2, -0.3], stream="demo")
print("gaps between successive steps:", " ".join("%.2e" % g for g in gaps))

P = TransportProblem("holder", "gauss", noise, stream="transport")
u = solve_transport(P, 0.9).values
print("transport solution range [%.4f, %.4f] (initial datum range [0, 1])" % (u.min(), u.max()))
xs = np.linspace(-1.5, 1.5, 31)
for k in range(4):
    dt = 2.0 ** (-6 - k)
    Pk = TransportProblem("holder", "gauss", noise, dt=dt, table_steps=2 ** 14, stream="transport")
    r = transport_residual(Pk, 0.5, xs, delta=dt, h=dt).max()
    print("  dt = 2^-%d   residual %.3e" % (6 + k, r))
