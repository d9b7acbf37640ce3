"""
One physical model, three pictures
==================================

The time-independent rotating-frame model, the normal-mode interaction
picture and the effective models describe the same short-time dynamics.
The static model is propagated exactly; the interaction picture needs a
sub-femtosecond RK4 step.
"""

# %%
import time

import numpy as np

from cavity_cz import HilbertSpace, IntegratorConfig, SystemParams, StateVector, evolve_state, frame_map
from cavity_cz.dynamics import STABILITY_LIMIT, build_source
from cavity_cz.qalgebra import HBAR

p = SystemParams.paper_sec5()
sa, sc = p.space("a"), p.space("c")
T = 0.1

# %%
# Largest step allowed by the stability bound in the interaction picture.
w = build_source("eq3", p, sc).max_frequency
print(f"fastest phase {w:.1f} meV -> dt <= {STABILITY_LIMIT * HBAR / w:.2e} ns")

# %%
# Exact propagation of the static model, mapped into the interaction picture.
# The static model is built on the normal-mode layout too, so both engines
# share one Fock truncation.
t0 = time.perf_counter()
ex_c = evolve_state("static", p, sc.basis_state("g", "g", 0, 0), T, IntegratorConfig(dt=T))
ref = frame_map(StateVector(sc, ex_c.final), T, p).data
print(f"exact engine: {time.perf_counter() - t0:.3f} s")

# %%
# RK4 on the interaction picture, halving the step.
prev = None
for dt in (5e-7, 2.5e-7, 1.25e-7):
    t0 = time.perf_counter()
    rk = evolve_state("eq3", p, sc.basis_state("g", "g", 0, 0), T,
                      IntegratorConfig("rk4-fixed", dt, 10**6), store_states=False)
    err = np.linalg.norm(rk.final - ref)
    ratio = "" if prev is None else f"  (error ratio {prev / err:.1f})"
    print(f"dt = {dt:.2e}: |psi_rk4 - psi_exact| = {err:.2e}, norm drift {rk.info['norm_drift']:.1e}, "
          f"{time.perf_counter() - t0:.2f} s{ratio}")
    prev = err

# %%
# A reference built on the lab-mode layout differs by ~4e-6: the truncated
# a and c layouts disagree in sectors holding more than n_max photons.
ex = evolve_state("static", p, sa.basis_state("g", "g", 0, 0), T, IntegratorConfig(dt=T))
print(f"a-layout vs c-layout reference: {np.linalg.norm(frame_map(StateVector(sa, ex.final), T, p).data - ref):.1e}")

# %%
# Effective models on the qubit block: the projected amplitudes agree with
# the full model apart from fourth-order light shifts of the drive.
eff = evolve_state("eff-vacuum", p, HilbertSpace.qubit_pair().basis_state("g", "g"), T,
                   IntegratorConfig(dt=1e-4))
full_gg = ex.final[sa.index("g", "g", 0, 0)]
print(f"<gg|psi(T)>: full {full_gg:.6f}, vacuum model {eff.final[3]:.6f}")
