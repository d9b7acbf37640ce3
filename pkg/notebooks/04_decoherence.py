"""
Decoherence budget
==================

Virtual populations of the excited dot levels and of the cavity photons
turn the bare lifetimes into much longer effective ones. The analytic
budget is checked against the exact Lindblad evolution and against a
quantum-trajectory ensemble.
"""

# %%
import math

import numpy as np

from cavity_cz import (DensityMatrix, IntegratorConfig, SystemParams, StateVector, collapse_operators,
                       derived_couplings, evolve_density, mcwf_evolve)
from cavity_cz.gate import decoherence_budget, photon_formula_estimate

p = SystemParams.paper_sec5()
d = derived_couplings(p)

# %%
# Analytic budget: P_e = max |Omega|^2/Delta^2 and P_c = max |lambda|^2/delta^2.
P_c = photon_formula_estimate(p, d)
b = decoherence_budget(p, d, P_c=P_c)
print(f"P_e = 1/{1 / b.P_e:.0f}, P_c = 1/{1 / P_c:.0f}")
print(f"t_e = {b.t_e:.1f} ns, t_c = {b.t_c:.1f} ns, gates per coherence time {b.gates_per_coherence}")
print("with P_c = 1/900:", decoherence_budget(p, d, P_e=1 / 256, P_c=1 / 900, t_gate=50.0))

# %%
# Coherence between ff and gg over 0.5 ns, exact master equation.
sa = p.space("a")
v = (sa.basis_state("f", "f", 0, 0).data + sa.basis_state("g", "g", 0, 0).data) / math.sqrt(2)
rho0 = DensityMatrix.from_state(StateVector(sa, v))
chans = collapse_operators(p)
T = 0.5
i, j = sa.index("f", "f", 0, 0), sa.index("g", "g", 0, 0)
open_ = evolve_density("static", p, chans, rho0, T, IntegratorConfig(dt=0.1))
closed = evolve_density("static", p, [], rho0, T, IntegratorConfig(dt=0.1))
decay = 1 - abs(open_.final[i, j]) / abs(closed.final[i, j])
print(f"coherence decay {decay:.3e} vs envelope {1 - math.exp(-T / min(b.t_e, b.t_c)):.3e}")
print(f"trace {open_['norm'][-1]:.12f}, smallest eigenvalue {open_['min_eigenvalue'].min():.1e}")

# %%
# The same run as a trajectory ensemble. Only trajectories that jump are
# propagated on their own.
m = mcwf_evolve("static", p, chans, StateVector(sa, v), T, 4000, 0, IntegratorConfig(dt=0.1))
decay_mc = 1 - abs(m.final[i, j]) / abs(closed.final[i, j])
print(f"trajectories: decay {decay_mc:.3e}, mean jumps {m.info['mean_jumps']:.4f}")

# %%
# A decoupled dot relaxes at exactly 1/tau_e.
q = p.replace(g_A=0, g_B=0, Omega_A=0, Omega_B=0)
r = evolve_density("static", q, collapse_operators(q), DensityMatrix.from_state(sa.basis_state("e", "g", 0, 0)),
                   1.0, IntegratorConfig(dt=0.25))
print(np.column_stack([r.times, r["Pe_A"], np.exp(-r.times / p.tau_e)]))
