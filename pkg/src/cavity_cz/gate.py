"""Controlled-phase protocol analysis.

Phases are accumulated arguments of ``<psi0|psi(t)>`` for the four
computational inputs ff, fg, gf, gg (first label dot A) with both modes in
vacuum. Only the balanced combination phi_gg - phi_gf - phi_fg + phi_ff is
used for pass/fail decisions, so a global sign convention cannot flip a
result.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import IntegratorConfig, Trajectory, evolve_state, mcwf_evolve
from .errors import LeakageTooLargeError, SamplingTooCoarseError
from .model import (
    DerivedCouplings,
    RegimeReport,
    SystemParams,
    collapse_operators,
    derived_couplings,
    hamiltonian_static,
    regime_report,
)
from .qalgebra import HBAR, HermitianSpectrum, HilbertSpace, StateVector

LABELS = ("ff", "fg", "gf", "gg")
ENGINES = ("static-exact", "eq3-rk4", "eff-vacuum")
QUOTED_MAX_PE = 1 / 256
QUOTED_PHOTON = 1 / 900
QUOTED_T_GATE = 50.0  # ns, quoted without a defining formula


@dataclass(frozen=True)
class PhaseSet:
    """End-time phases (rad) and the minimum return probability per input."""

    phi: dict
    T: float
    return_probability: dict
    series: dict = field(default_factory=dict, repr=False)
    times: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, label: str) -> float:
        return self.phi[label]


def _unwrapped_phase(overlap: np.ndarray, label: str) -> np.ndarray:
    raw = np.angle(overlap)
    steps = np.diff(raw)
    steps = (steps + np.pi) % (2 * np.pi) - np.pi
    if steps.size and np.max(np.abs(steps)) >= np.pi / 2:
        raise SamplingTooCoarseError(
            f"{label}: phase step {np.max(np.abs(steps)):.2f} rad between samples; sample more densely")
    return raw[0] + np.concatenate([[0.0], np.cumsum(steps)])


def extract_phases(trajs) -> PhaseSet:
    """Unwrapped phases from four trajectories started in ff, fg, gf, gg.

    ``trajs`` is a mapping keyed by label or a sequence in that order.
    """
    if not isinstance(trajs, dict):
        trajs = dict(zip(LABELS, trajs))
    phi, ret, series = {}, {}, {}
    times = None
    for lab in LABELS:
        tr = trajs[lab]
        ov = tr.observables["overlap"]
        p_ret = np.abs(ov) ** 2
        if p_ret.min() < 0.5:
            raise LeakageTooLargeError(f"{lab}: return probability fell to {p_ret.min():.3f}")
        series[lab] = _unwrapped_phase(ov, lab)
        phi[lab] = float(series[lab][-1])
        ret[lab] = float(p_ret.min())
        times = tr.times
    return PhaseSet(phi, float(times[-1]), ret, series, times)


def conditional_phase(phases) -> float:
    """``phi_gg - phi_gf - phi_fg + phi_ff`` in radians."""
    phi = phases.phi if isinstance(phases, PhaseSet) else phases
    return float(phi["gg"] - phi["gf"] - phi["fg"] + phi["ff"])


def conditional_rate(phases: PhaseSet, fit: bool = False) -> float:
    """Conditional phase rate as an energy (meV); equals eta for the vacuum model.

    With ``fit`` the slope of a least-squares line through the whole series
    is used, which averages out the fast virtual-excitation wiggles.
    """
    if not fit:
        return -conditional_phase(phases) * HBAR / phases.T
    s = phases.series
    combo = s["gg"] - s["gf"] - s["fg"] + s["ff"]
    slope = np.polyfit(phases.times, combo, 1)[0]
    return float(-slope * HBAR)


def correction_unitary(phases) -> np.ndarray:
    """Local phase gates on each dot's |g> (plus a global phase) that null the
    single-qubit phases measured in ``phases``."""
    phi = phases.phi if isinstance(phases, PhaseSet) else phases
    alpha = phi["gf"] - phi["ff"]  # dot A in g
    beta = phi["fg"] - phi["ff"]   # dot B in g
    return np.exp(-1j * phi["ff"]) * np.diag(np.exp(-1j * np.array([0.0, beta, alpha, alpha + beta])))


def apply_correction(phases, T: float | None = None) -> np.ndarray:
    """Diagonal evolution ``diag(exp(i phi))`` after the local correction.

    The result is ``diag(1, 1, 1, exp(i * conditional_phase))``. ``T`` is
    accepted for symmetry with the analytic correction and only checked.
    """
    phi = phases.phi if isinstance(phases, PhaseSet) else phases
    if T is not None and isinstance(phases, PhaseSet) and not math.isclose(T, phases.T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("phases were extracted at a different time")
    diag = np.diag(np.exp(1j * np.array([phi[k] for k in LABELS])))
    return correction_unitary(phi) @ diag


def ideal_cz() -> np.ndarray:
    return np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def gate_fidelity(M: np.ndarray, U_ideal: np.ndarray) -> tuple[float, float, float]:
    """Trace fidelity, average gate fidelity and leakage of a projected block.

    The average fidelity uses ``(Tr(M^+M) + |Tr(U^+M)|^2) / (d(d+1))``, which
    equals the textbook ``(|Tr(U^+M)|^2 + d)/(d(d+1))`` for unitary ``M``
    and accounts for lost norm otherwise.
    """
    M = np.asarray(M, dtype=complex)
    U = np.asarray(U_ideal, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape != U.shape:
        raise ValueError(f"gate_fidelity needs matching square matrices, got {M.shape} and {U.shape}")
    d = M.shape[0]
    tr = np.trace(U.conj().T @ M)
    f_trace = abs(tr) / d
    f_avg = (np.trace(M.conj().T @ M).real + abs(tr) ** 2) / (d * (d + 1))
    smin = np.linalg.svd(M, compute_uv=False).min()
    leakage = max(0.0, 1.0 - smin ** 2)
    return float(min(f_trace, 1.0)), float(min(f_avg, 1.0)), float(leakage)


def population_stats(traj: Trajectory) -> tuple[float, float, float]:
    """Peak excited-state populations of both dots and peak total photon number."""
    obs = traj.observables
    missing = [k for k in ("Pe_A", "Pe_B", "n_photon_total") if k not in obs]
    if missing:
        raise ValueError(f"trajectory lacks observables {missing}")
    return (float(np.max(obs["Pe_A"])), float(np.max(obs["Pe_B"])), float(np.max(obs["n_photon_total"])))


@dataclass(frozen=True)
class DecoherenceBudget:
    t_e: float
    t_c: float | None
    gates_per_coherence: int | None
    P_e: float
    P_c: float | None
    t_gate: float | None


def decoherence_budget(p: SystemParams, d: DerivedCouplings | None = None,
                       P_e: float | None = None, P_c: float | None = None,
                       t_gate: float | None = None) -> DecoherenceBudget:
    """Effective lifetimes ``t_e = tau_e / P_e`` and ``t_c = tau_c / P_c``.

    Without a measured ``P_e`` the estimate ``max |Omega_j|^2 / Delta_j^2`` is
    used; ``t_c`` stays empty unless a photon population is supplied. Zero
    populations give an unbounded (infinite) time.
    """
    if P_e is None:
        P_e = max(abs(p.Omega_A) ** 2 / p.Delta_A ** 2, abs(p.Omega_B) ** 2 / p.Delta_B ** 2)
    t_e = p.tau_e / P_e if P_e > 0 else math.inf
    t_c = None if P_c is None else (p.tau_c / P_c if P_c > 0 else math.inf)
    if t_gate is None and d is not None:
        t_gate = d.t_gate
    gates = None
    if t_gate and math.isfinite(t_gate):
        horizon = min(t_e, t_c) if t_c is not None else t_e
        gates = None if math.isinf(horizon) else int(math.floor(horizon / t_gate))
    return DecoherenceBudget(t_e, t_c, gates, P_e, P_c, t_gate)


def photon_formula_estimate(p: SystemParams, d: DerivedCouplings) -> float:
    """``max |lambda|^2 / delta^2``, the closed-form photon-occupation estimate."""
    lam = max(abs(d.lambda_A1), abs(d.lambda_A2), abs(d.lambda_B1), abs(d.lambda_B2))
    return lam ** 2 / p.delta ** 2 if p.delta else math.inf


def _within(measured: float, reference: float, factor: float = 2.0) -> bool:
    return reference > 0 and reference / factor <= measured <= reference * factor


def _phase_distance(a: float, b: float) -> float:
    return abs((a - b + np.pi) % (2 * np.pi) - np.pi)


@dataclass
class GateReport:
    engine: str
    phases: dict
    conditional_phase: float
    eta_sim: float
    eta_fit: float | None
    fidelity_trace: float
    fidelity_avg: float
    leakage: float
    residual_phases: dict
    return_probability: dict
    maxP_e_A: float
    maxP_e_B: float
    maxP_photon: float
    t_gate_used: float
    t_gate_analytic: float
    t_gate_half: float
    eta_analytic: float
    budget: DecoherenceBudget
    budget_measured: DecoherenceBudget
    regime: RegimeReport
    checks: dict = field(default_factory=dict)
    decay: dict | None = None
    prepare: str = "bare"

    @property
    def phi_ff(self) -> float:
        return self.phases["ff"]

    @property
    def phi_fg(self) -> float:
        return self.phases["fg"]

    @property
    def phi_gf(self) -> float:
        return self.phases["gf"]

    @property
    def phi_gg(self) -> float:
        return self.phases["gg"]

    @property
    def conditional_phase_error(self) -> float:
        """Distance of the conditional phase from pi, modulo 2 pi."""
        return _phase_distance(self.conditional_phase, np.pi)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["regime"] = {
            "threshold": self.regime.threshold,
            "ok": self.regime.ok,
            "conditions": [
                {"name": n, "left": l, "right": r, "ratio": q} for n, l, r, q in self.regime.rows()
            ],
        }
        out["conditional_phase_error"] = self.conditional_phase_error
        return out


def computational_states(p: SystemParams, engine: str, prepare: str = "bare") -> dict[str, StateVector]:
    """Initial states for the four inputs on the engine's layout.

    ``prepare="dressed"`` replaces each bare state by the static-model
    eigenvector it adiabatically connects to (largest overlap, phase chosen
    so the overlap is positive), modelling a slowly switched-on drive.
    """
    if engine == "eff-vacuum":
        space = HilbertSpace.qubit_pair()
        return {lab: space.basis_state(lab[0], lab[1]) for lab in LABELS}
    space = p.space("c" if engine == "eq3-rk4" else "a")
    bare = {lab: space.basis_state(lab[0], lab[1], 0, 0) for lab in LABELS}
    if prepare == "bare":
        return bare
    if prepare != "dressed":
        raise ValueError(f"prepare must be 'bare' or 'dressed', got {prepare!r}")
    spec = HermitianSpectrum(hamiltonian_static(p, space))
    out = {}
    for lab, b in bare.items():
        ov = spec.vectors.conj().T @ b.data
        k = int(np.argmax(np.abs(ov)))
        v = spec.vectors[:, k] * (abs(ov[k]) / ov[k]).conjugate()
        out[lab] = StateVector.normalized(space, v)
    return out


def _engine_run(p, engine, psi0, T, sample_dt, cfg):
    if engine == "static-exact":
        return evolve_state("static", p, psi0, T, IntegratorConfig(dt=sample_dt), store_states=False)
    if engine == "eff-vacuum":
        return evolve_state("eff-vacuum", p, psi0, T, IntegratorConfig(dt=sample_dt), store_states=False)
    if engine == "eq3-rk4":
        cfg = cfg or IntegratorConfig(method="rk4-fixed", dt=5e-7)
        every = max(1, int(round(sample_dt / cfg.dt)))
        cfg = IntegratorConfig(cfg.method, cfg.dt, every, cfg.max_steps, cfg.allow_unstable)
        return evolve_state("eq3", p, psi0, T, cfg, store_states=False)
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


def projected_block(finals: dict, inputs: dict) -> np.ndarray:
    """``M[i, j] = <i| U |j>`` restricted to the four computational states."""
    M = np.zeros((4, 4), complex)
    for j, lab_j in enumerate(LABELS):
        for i, lab_i in enumerate(LABELS):
            M[i, j] = np.vdot(inputs[lab_i].data, finals[lab_j])
    return M


def evolve_inputs(p: SystemParams, engine: str = "static-exact", T: float = 2.0,
                  sample_dt: float = 5e-4, cfg: IntegratorConfig | None = None,
                  prepare: str = "bare", threads: int = 1) -> tuple[dict, dict]:
    """Closed-system trajectories of the four computational inputs."""
    inputs = computational_states(p, engine, prepare)

    def run(lab):
        return _engine_run(p, engine, inputs[lab], T, sample_dt, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = dict(zip(LABELS, pool.map(run, LABELS)))
    else:
        trajs = {lab: run(lab) for lab in LABELS}
    return trajs, inputs


def measure_conditional_rate(p: SystemParams, T: float = 2.0, engine: str = "static-exact",
                             sample_dt: float = 5e-4, prepare: str = "bare") -> float:
    """Fitted conditional-phase rate (meV) over a horizon ``T``."""
    trajs, _ = evolve_inputs(p, engine, T, sample_dt, prepare=prepare)
    return conditional_rate(extract_phases(trajs), fit=True)


def _decay_block(p, engine, inputs, T, correction, n_trajectories, seed, decay_dt):
    """Coherence matrix ``c_ij = <i|E(|i><j|)|j>`` from pair-superposition ensembles.

    ``correction`` holds the diagonal of the local phase correction.
    """
    if engine != "static-exact":
        raise ValueError("with_decay runs need the static-exact engine")
    space = inputs["ff"].space
    chans = collapse_operators(p, space)
    c = np.zeros((4, 4), complex)
    diag_acc = np.zeros(4)
    diag_n = np.zeros(4)
    cfg = IntegratorConfig(dt=decay_dt)
    jumps = []
    pair = 0
    for i in range(4):
        for j in range(i + 1, 4):
            psi = StateVector.normalized(space, inputs[LABELS[i]].data + inputs[LABELS[j]].data)
            tr = mcwf_evolve("static", p, chans, psi, T, n_trajectories, seed + pair, cfg)
            pair += 1
            rho = tr.final
            vi, vj = inputs[LABELS[i]].data, inputs[LABELS[j]].data
            c[i, j] = 2 * np.vdot(vi, rho @ vj)
            c[j, i] = np.conj(c[i, j])
            for k, v in ((i, vi), (j, vj)):
                diag_acc[k] += 2 * np.vdot(v, rho @ v).real
                diag_n[k] += 1
            jumps.append(tr.info["mean_jumps"])
    c[np.diag_indices(4)] = diag_acc / diag_n
    corr = np.asarray(correction)
    c = corr[:, None] * c * corr[None, :].conj()
    return c, float(np.mean(jumps))


def run_cz_protocol(
    p: SystemParams,
    cfg: IntegratorConfig | None = None,
    engine: str = "static-exact",
    with_decay: bool = False,
    *,
    T: float | None = None,
    sample_dt: float = 5e-4,
    calibrate: bool = False,
    calibration_horizon: float = 2.0,
    prepare: str = "bare",
    n_trajectories: int = 200,
    seed: int = 0,
    decay_dt: float = 0.05,
    regime_threshold: float = 10.0,
    threads: int = 1,
) -> GateReport:
    """Evolve the four inputs to the gate time and assemble a ``GateReport``.

    The gate time defaults to the analytic ``pi hbar / |eta|``; with
    ``calibrate`` it is rescaled by the conditional rate measured over
    ``calibration_horizon``.
    """
    d = derived_couplings(p)
    regime = regime_report(p, d, regime_threshold)
    t_used = d.t_gate if T is None else T
    if calibrate and T is None:
        eta_meas = measure_conditional_rate(p, calibration_horizon, engine, sample_dt, prepare)
        t_used = d.t_gate * abs(d.eta / eta_meas)

    trajs, inputs = evolve_inputs(p, engine, t_used, sample_dt, cfg, prepare, threads)
    phases = extract_phases(trajs)
    cond = conditional_phase(phases)
    C = correction_unitary(phases)
    M = C @ projected_block({k: t.final for k, t in trajs.items()}, inputs)
    f_trace, f_avg, leak = gate_fidelity(M, ideal_cz())
    corrected = np.angle(np.diag(M))
    residual = {lab: float(corrected[k]) for k, lab in enumerate(LABELS[:3])}

    if engine == "eff-vacuum":
        pe_a = pe_b = ph = 0.0
    else:
        stats = [population_stats(t) for t in trajs.values()]
        pe_a, pe_b, ph = (max(s[k] for s in stats) for k in range(3))
    pe = max(pe_a, pe_b)
    formula_ph = photon_formula_estimate(p, d)
    budget = decoherence_budget(p, d, P_c=formula_ph, t_gate=t_used)
    budget_measured = decoherence_budget(p, d, P_e=pe if pe > 0 else None, P_c=ph if ph > 0 else None,
                                         t_gate=t_used)
    checks = {
        "maxP_e_vs_quoted_1_256": {"reference": QUOTED_MAX_PE, "measured": pe,
                                  "ratio": pe / QUOTED_MAX_PE, "ok": _within(pe, QUOTED_MAX_PE)},
        "maxP_photon_vs_quoted_1_900": {"reference": QUOTED_PHOTON, "measured": ph,
                                       "ratio": ph / QUOTED_PHOTON, "ok": _within(ph, QUOTED_PHOTON)},
        "maxP_photon_vs_formula": {"reference": formula_ph, "measured": ph,
                                   "ratio": ph / formula_ph if formula_ph else math.inf,
                                   "ok": _within(ph, formula_ph)},
        "t_gate_half_vs_quoted_50ns": {"reference": QUOTED_T_GATE, "measured": d.t_gate_half,
                                      "ratio": d.t_gate_half / QUOTED_T_GATE},
    }
    try:
        eta_fit = conditional_rate(phases, fit=True)
    except (TypeError, np.linalg.LinAlgError):
        eta_fit = None

    decay = None
    if with_decay:
        c, mean_jumps = _decay_block(p, engine, inputs, t_used, np.diag(C), n_trajectories, seed, decay_dt)
        v = np.diag(ideal_cz())
        f_pro = (v.conj() @ c @ v).real / 16
        ret = float(np.trace(c).real / 4)
        f_avg_decay = (4 * f_pro + ret) / 5
        t_min = min(budget.t_e, budget.t_c if budget.t_c is not None else math.inf)
        envelope = math.exp(-t_used / t_min)
        # closed-system pair coherences (M_ii + M_ij)(M_ji + M_jj)^*
        M0 = projected_block({k: t.final for k, t in trajs.items()}, inputs)
        iu = np.triu_indices(4, 1)
        closed = np.array([(M0[i, i] + M0[i, j]) * np.conj(M0[j, i] + M0[j, j]) for i, j in zip(*iu)])
        kept = np.abs(c[iu]) / np.abs(closed)
        decay = {
            "fidelity_avg": float(f_avg_decay),
            "fidelity_ratio": float(f_avg_decay / f_avg),
            "coherence_retained": kept.tolist(),
            "coherence_decay": float(1 - kept.mean()),
            "envelope": envelope,
            "reduction": float(1 - f_avg_decay / f_avg),
            "envelope_reduction": 1 - envelope,
            "mean_jumps": mean_jumps,
            "n_trajectories": n_trajectories,
            "seed": seed,
        }

    return GateReport(
        engine=engine, phases=dict(phases.phi), conditional_phase=cond,
        eta_sim=conditional_rate(phases), eta_fit=eta_fit,
        fidelity_trace=f_trace, fidelity_avg=f_avg, leakage=leak,
        residual_phases=residual, return_probability=dict(phases.return_probability),
        maxP_e_A=pe_a, maxP_e_B=pe_b, maxP_photon=ph,
        t_gate_used=t_used, t_gate_analytic=d.t_gate, t_gate_half=d.t_gate_half, eta_analytic=d.eta,
        budget=budget, budget_measured=budget_measured, regime=regime, checks=checks, decay=decay, prepare=prepare,
    )
