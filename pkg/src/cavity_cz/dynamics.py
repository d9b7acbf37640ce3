"""Time evolution engines and frame mapping.

Four engines share one ``Trajectory`` output type:

* ``exact-eigen``: one Hermitian eigendecomposition of a time-independent
  generator, then O(dim^2) per sample;
* ``rk4-fixed`` and ``magnus2-midpoint``: compiled fixed-step integrators
  for the explicitly time-dependent pictures;
* ``evolve_density``: Lindblad dynamics, exact per invariant sector for
  time-independent sources, RK4 otherwise;
* ``mcwf_evolve``: quantum-jump unravelling with a once-exponentiated
  non-Hermitian generator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import (
    IntegratorFailureError,
    LayoutMismatchError,
    MaxStepsExceededError,
    StabilityError,
)
from .model import (
    DrivenHamiltonian,
    SystemParams,
    eff1_terms,
    eq1_terms,
    eq3_terms,
    frame_generator,
    h_eff_stage2,
    h_eff_vacuum,
    hamiltonian_static,
    mode_operators,
)
from .qalgebra import (
    HBAR,
    CavityOperators,
    DensityMatrix,
    HermitianSpectrum,
    HilbertSpace,
    Operator,
    StateVector,
    expm_nonhermitian,
    normal_mode_rotation,
)

log = logging.getLogger(__name__)

SOURCES = ("eq1", "eq3", "static", "eff1", "eff2", "eff-vacuum")
METHODS = ("exact-eigen", "rk4-fixed", "magnus2-midpoint")
STABILITY_LIMIT = 0.2
_CHUNK = 2048


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control. For ``exact-eigen`` ``dt`` is just the sample spacing."""

    method: str = "exact-eigen"
    dt: float = 5e-4
    sample_every: int = 1
    max_steps: int = 10_000_000
    allow_unstable: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ValueError("sample_every must be a positive integer")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of one evolution.

    ``observables`` holds one series per name, always including ``norm``
    (state norm, density trace or ensemble mean norm). Complex series are
    kept complex (``overlap`` and user-supplied non-Hermitian operators).
    """

    times: np.ndarray
    space: HilbertSpace
    observables: dict
    states: np.ndarray | None = None
    final: np.ndarray | None = None
    kind: str = "state"
    info: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]


def build_source(source: str, p: SystemParams, space: HilbertSpace) -> DrivenHamiltonian:
    """Generator for ``source`` on ``space``; rejects incompatible layouts."""
    need = {"eq1": ("a",), "eq3": ("c",), "eff1": ("c",), "eff2": ("c",),
            "static": ("a", "c"), "eff-vacuum": ("qubit",)}
    if source not in need:
        raise ValueError(f"unknown source {source!r}; choose from {SOURCES}")
    if space.basis not in need[source]:
        raise LayoutMismatchError(f"source {source!r} needs a {'/'.join(need[source])} layout, "
                                  f"state is on {space.basis!r}")
    if space.is_cavity_layout and space.n_max != p.n_max:
        raise LayoutMismatchError(f"state truncation n_max={space.n_max} differs from params n_max={p.n_max}")
    if source == "eq1":
        return eq1_terms(p, space)
    if source == "eq3":
        return eq3_terms(p, space)
    if source == "eff1":
        return eff1_terms(p, space)
    if source == "eff2":
        return DrivenHamiltonian(space, h_eff_stage2(p, space).matrix)
    if source == "static":
        return DrivenHamiltonian(space, hamiltonian_static(p, space).matrix)
    return DrivenHamiltonian(space, h_eff_vacuum(p).matrix)


def default_observables(space: HilbertSpace) -> dict[str, np.ndarray]:
    """Populations and photon numbers recorded for every run."""
    if space.is_cavity_layout:
        ops = CavityOperators(space)
        m = mode_operators(space)
        num = {k: m[k].conj().T @ m[k] for k in ("aA", "aB", "c1", "c2")}
        return {
            "Pe_A": ops.dot(0, "proj_e"),
            "Pe_B": ops.dot(1, "proj_e"),
            "n_a_A": num["aA"],
            "n_a_B": num["aB"],
            "n_c1": num["c1"],
            "n_c2": num["c2"],
            "n_photon_total": num["aA"] + num["aB"],
        }
    if space.basis == "qubit":
        out = {}
        for k, lab in enumerate(("ff", "fg", "gf", "gg")):
            P = np.zeros((4, 4))
            P[k, k] = 1.0
            out[f"P_{lab}"] = P
        return out
    return {}


def _as_matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)


def _is_hermitian(m: np.ndarray) -> bool:
    return np.allclose(m, m.conj().T, rtol=0, atol=1e-14 * max(1.0, np.abs(m).max(initial=0)))


def _state_expectations(states: np.ndarray, ops: dict) -> dict[str, np.ndarray]:
    out = {}
    for name, m in ops.items():
        vals = np.einsum("ti,ti->t", states.conj(), states @ m.T)
        out[name] = vals.real if _is_hermitian(m) else vals
    return out


def _step_grid(T: float, cfg: IntegratorConfig) -> tuple[int, float, np.ndarray]:
    if T < 0:
        raise ValueError(f"horizon must be non-negative, got {T!r}")
    n_steps = max(1, int(round(T / cfg.dt))) if T > 0 else 0
    dt = T / n_steps if n_steps else cfg.dt
    if n_steps > cfg.max_steps:
        raise MaxStepsExceededError(n_steps, cfg.max_steps, cfg.max_steps * cfg.dt)
    idx = np.arange(0, n_steps + 1, cfg.sample_every)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return n_steps, dt, idx * dt


def _check_stability(ham: DrivenHamiltonian, dt: float, cfg: IntegratorConfig):
    product = dt * ham.max_frequency / HBAR
    if product > STABILITY_LIMIT:
        if not cfg.allow_unstable:
            raise StabilityError(
                f"dt*omega_max = {product:.3f} exceeds {STABILITY_LIMIT}; "
                f"use dt <= {STABILITY_LIMIT * HBAR / ham.max_frequency:.3e} ns or allow_unstable")
        log.warning("dt*omega_max = %.3f exceeds %.1f (override in effect)", product, STABILITY_LIMIT)


def _resolve_method(ham: DrivenHamiltonian, cfg: IntegratorConfig | None) -> IntegratorConfig:
    if cfg is None:
        if ham.is_time_independent:
            return IntegratorConfig()
        return IntegratorConfig(method="rk4-fixed", dt=5e-7, sample_every=1000)
    if cfg.method == "exact-eigen" and not ham.is_time_independent:
        raise ValueError("exact-eigen needs a time-independent source (static, eff2, eff-vacuum)")
    return cfg


def evolve_state(
    source: str | DrivenHamiltonian,
    p: SystemParams | None,
    psi0: StateVector,
    T: float,
    cfg: IntegratorConfig | None = None,
    observables: dict | None = None,
    store_states: bool = True,
) -> Trajectory:
    """Solve ``i hbar dpsi/dt = H psi`` from ``psi0`` over ``[0, T]`` (ns).

    ``observables`` adds named operators to the default set; their
    expectation values are recorded at every sample together with the norm
    and the complex overlap ``<psi0|psi(t)>``.
    """
    ham = source if isinstance(source, DrivenHamiltonian) else build_source(source, p, psi0.space)
    if ham.space != psi0.space:
        raise LayoutMismatchError("initial state layout does not match the source")
    cfg = _resolve_method(ham, cfg)
    n_steps, dt, times = _step_grid(T, cfg)
    ops = default_observables(psi0.space)
    ops.update({k: _as_matrix(v) for k, v in (observables or {}).items()})
    psi = psi0.data

    if cfg.method == "exact-eigen":
        spec = HermitianSpectrum(Operator(ham.space, ham.static))
        coeffs = spec.coefficients(psi)
        chunks, obs_chunks = [], []
        for lo in range(0, times.size, _CHUNK):
            block = spec.evolve(coeffs, times[lo:lo + _CHUNK])
            obs_chunks.append(_chunk_observables(block, psi, ops))
            if store_states or lo + _CHUNK >= times.size:
                chunks.append(block if store_states else block[-1:])
        obs = {k: np.concatenate([c[k] for c in obs_chunks]) for k in obs_chunks[0]}
        states = np.concatenate(chunks) if store_states else None
        final = chunks[-1][-1]
    else:
        _check_stability(ham, dt, cfg)
        runner = _kernels.rk4_run if cfg.method == "rk4-fixed" else _kernels.magnus2_run
        flat = _kernels.flatten(ham)
        if n_steps == 0:
            samples = psi[None, :].copy()
        else:
            samples = runner(psi.astype(np.complex128), 0.0, dt, n_steps, int(cfg.sample_every), *flat)
        obs = _chunk_observables(samples, psi, ops)
        states = samples if store_states else None
        final = samples[-1]
    info = {"method": cfg.method, "dt": dt, "n_steps": n_steps,
            "norm_drift": float(np.max(np.abs(obs["norm"] - 1.0)))}
    return Trajectory(times, psi0.space, obs, states, final.copy(), "state", info)


def _chunk_observables(block: np.ndarray, psi0: np.ndarray, ops: dict) -> dict:
    out = {"norm": np.linalg.norm(block, axis=1), "overlap": block @ psi0.conj()}
    out.update(_state_expectations(block, ops))
    return out


def frame_map(state: StateVector, t: float, p: SystemParams, direction: str = "static->eq3",
              target_basis: str = "a") -> StateVector:
    """Map states between the static rotating frame and the normal-mode interaction picture.

    ``static->eq3`` rotates an a-basis state to the normal-mode layout (if
    needed) and applies ``exp(+i H_diag t/hbar)``; ``eq3->static`` inverts
    this and returns a state on ``target_basis``.
    """
    if t < 0:
        raise ValueError("frame_map needs t >= 0")
    if not state.space.is_cavity_layout:
        raise LayoutMismatchError("frame_map acts on cavity layouts only")
    c_space = state.space.with_basis("c")
    phases = np.exp(1j * np.diag(frame_generator(p, c_space).matrix).real * (t / HBAR))
    if direction in ("static->eq3", "static→eq3"):
        v = state.data
        if state.space.basis == "a":
            v = normal_mode_rotation(state.space).matrix @ v
        return StateVector(c_space, phases * v)
    if direction in ("eq3->static", "eq3→static"):
        if state.space.basis != "c":
            raise LayoutMismatchError("eq3 states live on the normal-mode layout")
        v = phases.conj() * state.data
        if target_basis == "a":
            R = normal_mode_rotation(state.space.with_basis("a")).matrix
            return StateVector(state.space.with_basis("a"), R.conj().T @ v)
        return StateVector(c_space, v)
    raise ValueError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------- densities


def _channels(collapse) -> list[tuple[np.ndarray, float]]:
    out = []
    for ch in collapse:
        op, rate = ch[0], ch[1]
        out.append((_as_matrix(op), float(rate)))
    return out


def invariant_sectors(h: np.ndarray, jumps: list[np.ndarray]) -> list[np.ndarray]:
    """Index sets closed under ``h`` and every jump operator."""
    pattern = np.abs(h) > 0
    for L in jumps:
        pattern |= np.abs(L) > 0
    pattern |= pattern.T
    n, labels = connected_components(csr_matrix(pattern), directed=False)
    return [np.flatnonzero(labels == k) for k in range(n)]


def _block_liouvillian(h, chans, ia, ib):
    da, db = ia.size, ib.size
    Ia, Ib = np.eye(da), np.eye(db)
    ha, hb = h[np.ix_(ia, ia)], h[np.ix_(ib, ib)]
    S = (-1j / HBAR) * (np.kron(ha, Ib) - np.kron(Ia, hb.T))
    for L, rate in chans:
        if rate == 0:
            continue
        La, Lb = L[np.ix_(ia, ia)], L[np.ix_(ib, ib)]
        Ka, Kb = La.conj().T @ La, Lb.conj().T @ Lb
        S += rate * (np.kron(La, Lb.conj()) - 0.5 * np.kron(Ka, Ib) - 0.5 * np.kron(Ia, Kb.T))
    return S


def _lindblad_rhs(h, chans, rho):
    out = (-1j / HBAR) * (h @ rho - rho @ h)
    for L, rate in chans:
        if rate == 0:
            continue
        K = L.conj().T @ L
        out += rate * (L @ rho @ L.conj().T - 0.5 * (K @ rho + rho @ K))
    return out


def evolve_density(
    source: str | DrivenHamiltonian,
    p: SystemParams | None,
    collapse,
    rho0: DensityMatrix,
    T: float,
    cfg: IntegratorConfig | None = None,
    observables: dict | None = None,
    store_states: bool = False,
) -> Trajectory:
    """Lindblad evolution ``drho = -(i/hbar)[H, rho] + sum k (L rho L^+ - {L^+L, rho}/2)``.

    Time-independent sources are propagated exactly: the generator is split
    into sectors closed under ``H`` and all jump operators, and each
    populated block of ``rho`` is advanced with the exponential of its own
    superoperator. Time-dependent sources use fixed-step RK4.
    """
    ham = source if isinstance(source, DrivenHamiltonian) else build_source(source, p, rho0.space)
    if ham.space != rho0.space:
        raise LayoutMismatchError("initial density layout does not match the source")
    cfg = _resolve_method(ham, cfg)
    chans = _channels(collapse)
    n_steps, dt, times = _step_grid(T, cfg)
    ops = default_observables(rho0.space)
    ops.update({k: _as_matrix(v) for k, v in (observables or {}).items()})
    rho = np.array(rho0.data)
    n = rho.shape[0]

    if cfg.method == "exact-eigen":
        sectors = invariant_sectors(ham.static, [L for L, _ in chans])
        sample_dt = dt * cfg.sample_every
        blocks = []
        for ia in sectors:
            for ib in sectors:
                blk = rho[np.ix_(ia, ib)]
                if not np.any(blk):
                    continue
                S = _block_liouvillian(ham.static, chans, ia, ib)
                steps = {}
                blocks.append((ia, ib, blk.reshape(-1), S, steps))

        def advance(h_len):
            for k, (ia, ib, vec, S, steps) in enumerate(blocks):
                key = round(h_len / sample_dt, 12)
                if key not in steps:
                    steps[key] = scipy.linalg.expm(S * h_len)
                blocks[k] = (ia, ib, steps[key] @ vec, S, steps)

        def assemble():
            out = np.zeros((n, n), complex)
            for ia, ib, vec, _, _ in blocks:
                out[np.ix_(ia, ib)] = vec.reshape(ia.size, ib.size)
            return out

        snaps = [assemble()]
        for k in range(1, times.size):
            advance(times[k] - times[k - 1])
            snaps.append(assemble())
        rhos = np.array(snaps)
    else:
        _check_stability(ham, dt, cfg)
        rhos = [rho.copy()]
        sample_steps = set(np.round(times / dt).astype(int).tolist())
        for step in range(n_steps):
            t = step * dt
            h0, hm, h1 = (ham.at(x).matrix for x in (t, t + dt / 2, t + dt))
            k1 = _lindblad_rhs(h0, chans, rho)
            k2 = _lindblad_rhs(hm, chans, rho + 0.5 * dt * k1)
            k3 = _lindblad_rhs(hm, chans, rho + 0.5 * dt * k2)
            k4 = _lindblad_rhs(h1, chans, rho + dt * k3)
            rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if step + 1 in sample_steps:
                rhos.append(rho.copy())
        rhos = np.array(rhos)

    trace = np.einsum("tii->t", rhos).real
    min_eig = np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0] for r in rhos])
    if min_eig.min() < -1e-7:
        raise IntegratorFailureError(
            f"density matrix lost positivity (min eigenvalue {min_eig.min():.2e}); reduce dt")
    obs = {"norm": trace, "min_eigenvalue": min_eig,
           "overlap": np.einsum("ij,tji->t", rho0.data, rhos).real}
    for name, m in ops.items():
        vals = np.einsum("ij,tji->t", m, rhos)
        obs[name] = vals.real if _is_hermitian(m) else vals
    info = {"method": cfg.method, "dt": dt, "n_steps": n_steps,
            "trace_drift": float(np.max(np.abs(trace - 1.0)))}
    return Trajectory(times, rho0.space, obs, rhos if store_states else None, rhos[-1].copy(),
                      "density", info)


# ------------------------------------------------------------- trajectories


class _JumpStepper:
    """Advances one unnormalized trajectory with quantum jumps.

    ``exps[k]`` is the non-Hermitian propagator over ``dt / 2**k``; a jump
    inside a step is located by recursive halving down to ``dt / 2**depth``.
    """

    def __init__(self, exps, chans, rng, step_len):
        self.exps = exps
        self.step_len = step_len
        self.chans = chans
        self.rng = rng
        self.depth = len(exps) - 1
        self.jumps = []

    def advance(self, psi, r, t, level=0):
        trial = self.exps[level] @ psi
        h = self.step_len / 2 ** level
        if np.vdot(trial, trial).real >= r:
            return trial, r
        if level == self.depth:
            return self._jump(trial, t + h), self.rng.random()
        psi, r = self.advance(psi, r, t, level + 1)
        return self.advance(psi, r, t + h / 2, level + 1)

    def _jump(self, psi, t):
        weights = np.array([rate * np.linalg.norm(L @ psi) ** 2 for L, rate in self.chans])
        k = int(self.rng.choice(len(self.chans), p=weights / weights.sum()))
        out = self.chans[k][0] @ psi
        self.jumps.append((t, k))
        return out / np.linalg.norm(out)


def mcwf_evolve(
    source: str,
    p: SystemParams,
    collapse,
    psi0: StateVector,
    T: float,
    n_trajectories: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    observables: dict | None = None,
    bisection_depth: int = 20,
) -> Trajectory:
    """Monte-Carlo wavefunction ensemble for the static model.

    The generator ``H - (i hbar/2) sum k L^+L`` is exponentiated once per
    step size. All trajectories share the no-jump branch until their own
    first jump, so only jumping members are propagated individually.
    Trajectory ``i`` draws from ``SeedSequence(seed).spawn(n)[i]``, which
    makes results independent of evaluation order.
    """
    if source != "static":
        raise ValueError("mcwf_evolve supports the time-independent 'static' source only")
    if int(n_trajectories) != n_trajectories or n_trajectories < 1:
        raise ValueError(f"n_trajectories must be a positive integer, got {n_trajectories!r}")
    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    cfg = cfg or IntegratorConfig()
    chans = [(L, r) for L, r in _channels(collapse) if r > 0]
    if not chans:
        traj = evolve_state(source, p, psi0, T, cfg, observables, store_states=False)
        info = dict(traj.info, n_trajectories=int(n_trajectories), mean_jumps=0.0,
                    jump_counts=np.zeros(int(n_trajectories), int))
        rho = np.outer(traj.final, traj.final.conj())
        return Trajectory(traj.times, traj.space, traj.observables, None, rho, "ensemble", info)

    ham = build_source(source, p, psi0.space)
    n_steps, dt, times = _step_grid(T, IntegratorConfig(dt=cfg.dt * cfg.sample_every,
                                                        max_steps=cfg.max_steps))
    ops = default_observables(psi0.space)
    ops.update({k: _as_matrix(v) for k, v in (observables or {}).items()})
    G = ham.static - 0.5j * HBAR * sum(rate * (L.conj().T @ L) for L, rate in chans)
    exps = [expm_nonhermitian(G, dt / 2 ** k) for k in range(bisection_depth + 1)]

    psi0v = psi0.data.astype(complex)
    branch = [psi0v]
    for _ in range(n_steps):
        branch.append(exps[0] @ branch[-1])
    branch = np.array(branch)
    q = np.einsum("ti,ti->t", branch.conj(), branch).real
    branch_n = branch / np.sqrt(q)[:, None]
    nj_obs = _chunk_observables(branch_n, psi0v, ops)

    children = np.random.SeedSequence(int(seed)).spawn(int(n_trajectories))
    sums = {k: np.zeros(times.size, dtype=v.dtype) for k, v in nj_obs.items()}
    sq = {k: np.zeros(times.size) for k in nj_obs}
    nj_count = np.zeros(times.size)
    rho_T = np.zeros((psi0v.size,) * 2, complex)
    jump_counts = np.zeros(int(n_trajectories), dtype=int)
    jump_log = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        r = rng.random()
        crossed = np.flatnonzero(q < r)
        if crossed.size == 0:
            nj_count += 1
            rho_T += np.outer(branch_n[-1], branch_n[-1].conj())
            continue
        first = int(crossed[0])
        nj_count[:first] += 1
        stepper = _JumpStepper(exps, chans, rng, dt)
        psi = branch[first - 1]
        own = []
        for s in range(first, times.size):
            psi, r = stepper.advance(psi, r, times[s - 1])
            own.append(psi / np.linalg.norm(psi))
        own = np.array(own)
        o = _chunk_observables(own, psi0v, ops)
        for k in sums:
            sums[k][first:] += o[k]
            sq[k][first:] += np.abs(o[k]) ** 2
        rho_T += np.outer(own[-1], own[-1].conj())
        jump_counts[i] = len(stepper.jumps)
        jump_log.extend((i, t, ch) for t, ch in stepper.jumps)
    N = float(n_trajectories)
    obs, sem = {}, {}
    for k in sums:
        total = sums[k] + nj_count * nj_obs[k]
        total_sq = sq[k] + nj_count * np.abs(nj_obs[k]) ** 2
        mean = total / N
        var = np.maximum(total_sq / N - np.abs(mean) ** 2, 0.0)
        obs[k] = mean
        sem[k] = np.sqrt(var / N)
    info = {"method": "mcwf", "dt": dt, "n_steps": n_steps, "n_trajectories": int(n_trajectories),
            "seed": int(seed), "jump_counts": jump_counts, "mean_jumps": float(jump_counts.mean()),
            "jumps": jump_log, "sem": sem, "no_jump_probability": q}
    return Trajectory(times, psi0.space, obs, None, rho_T / N, "ensemble", info)
