"""Batch front end: ``python -m cavity_cz <command> --config FILE``.

Commands are ``derive``, ``evolve``, ``gate``, ``sweep`` and ``validate``.
Configs are INI files with ``[system]``, ``[integrator]``, ``[run]`` and an
optional ``[sweep]`` section; inline ``;`` comments carry the units. Every
float written to CSV or JSON is the shortest round-trip decimal.

Exit codes: 0 ok, 1 config, 2 resonance/derivation, 3 strict-regime,
4 engine, 5 empty sweep, 6 integrator budget.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import STABILITY_LIMIT, IntegratorConfig, build_source, evolve_density, evolve_state, frame_map
from .errors import (
    CavityCZError,
    ConfigError,
    GateTimeUndefinedError,
    LeakageTooLargeError,
    MaxStepsExceededError,
    ResonanceError,
)
from .gate import (
    LABELS,
    QUOTED_PHOTON,
    QUOTED_T_GATE,
    conditional_rate,
    decoherence_budget,
    evolve_inputs,
    extract_phases,
    photon_formula_estimate,
    projected_block,
    run_cz_protocol,
)
from .model import SystemParams, collapse_operators, derived_couplings, regime_report
from .qalgebra import HBAR, DensityMatrix, HilbertSpace, StateVector

log = logging.getLogger("cavity_cz")

EXIT_OK, EXIT_CONFIG, EXIT_DERIVE, EXIT_STRICT, EXIT_ENGINE, EXIT_EMPTY, EXIT_BUDGET = range(7)

EVOLVE_COLUMNS = ("t_ns", "norm_or_trace", "Pe_A", "Pe_B", "n_photon_total", "n_c1", "n_c2",
                  "re_overlap", "im_overlap")
SWEEP_COLUMNS = ("value", "status", "reason", "eta_meV", "t_gate_ns", "conditional_phase",
                 "fidelity_avg", "leakage", "maxP_e", "maxP_photon")
SOURCE_LAYOUT = {"eq1": "a", "static": "a", "eq3": "c", "eff1": "c", "eff2": "c", "eff-vacuum": "qubit"}

_COMPLEX_KEYS = ("g_A", "g_B", "Omega_A", "Omega_B")
_REQUIRED = ("g_A", "g_B", "Omega_A", "Omega_B", "Delta_A", "Delta_B", "delta", "nu", "tau_c", "tau_e")


@dataclass(frozen=True)
class RunOptions:
    source: str = "static"
    engine: str = "static-exact"
    horizon: float = 2.0
    initial: str = "gg"
    amplitudes: tuple | None = None
    with_decay: bool = False
    seed: int = 0
    n_trajectories: int = 200
    sample_dt: float = 5e-4
    gate_time: float | None = None
    calibrate: bool = False
    prepare: str = "bare"
    validate_horizon: float = 0.5
    overlap_threshold: float = 1e-6
    rate_tolerance: float = 0.1


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ConfigError("sweep.values", "sweep has no points")


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams
    integrator: IntegratorConfig | None
    run: RunOptions
    sweep: SweepSpec | None = None
    echo: dict = field(default_factory=dict)


# ---------------------------------------------------------------- parsing


def _number(section: str, key: str, raw: str, kind):
    path = f"{section}.{key}"
    try:
        if kind is complex:
            v = complex(raw.replace(" ", ""))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError
            return v.real if v.imag == 0 else v
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError
        return v
    except ValueError:
        raise ConfigError(path, f"invalid or non-finite {kind.__name__} value {raw!r}") from None


def _kind(tp) -> type:
    s = str(tp)
    for name, k in (("bool", bool), ("int", int), ("float", float), ("complex", complex)):
        if name in s:
            return k
    return str


def _float_range(section: str, spec: str) -> tuple:
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ConfigError(f"{section}.range", f"expected start:stop:step, got {spec!r}") from None
    if step == 0 or not all(math.isfinite(x) for x in (start, stop, step)):
        raise ConfigError(f"{section}.range", "step must be non-zero and all values finite")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(float(start + k * step) for k in range(max(n, 0)))


def parse_config(text: str) -> RunConfig:
    """Validate INI text into a ``RunConfig``; errors name the key path."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    allowed = {"system", "integrator", "run", "sweep"}
    for sec in cp.sections():
        if sec not in allowed:
            raise ConfigError(sec, "unknown section")
    if not cp.has_section("system"):
        raise ConfigError("system", "missing section")

    sys_fields = {f.name for f in fields(SystemParams)}
    sysv = {}
    for key, raw in cp.items("system"):
        if key not in sys_fields:
            raise ConfigError(f"system.{key}", "unknown key")
        kind = complex if key in _COMPLEX_KEYS else (int if key == "n_max" else float)
        sysv[key] = _number("system", key, raw, kind)
    for key in _REQUIRED:
        if key not in sysv:
            raise ConfigError(f"system.{key}", "missing required physical parameter")
    try:
        system = SystemParams(**sysv)
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None

    integrator = None
    if cp.has_section("integrator"):
        kinds = {f.name: _kind(f.type) for f in fields(IntegratorConfig)}
        iv = {}
        for key, raw in cp.items("integrator"):
            if key not in kinds:
                raise ConfigError(f"integrator.{key}", "unknown key")
            iv[key] = raw.strip() if kinds[key] is str else _number("integrator", key, raw, kinds[key])
        try:
            integrator = IntegratorConfig(**iv)
        except ValueError as exc:
            raise ConfigError("integrator", str(exc)) from None

    run_kinds = {f.name: _kind(f.type) for f in fields(RunOptions)}
    rv = {}
    if cp.has_section("run"):
        for key, raw in cp.items("run"):
            if key not in run_kinds:
                raise ConfigError(f"run.{key}", "unknown key")
            if key == "amplitudes":
                rv[key] = tuple(_number("run", key, x, complex) for x in raw.split(","))
            elif key == "gate_time":
                rv[key] = _number("run", key, raw, float)
            elif run_kinds[key] is str:
                rv[key] = raw.strip()
            else:
                rv[key] = _number("run", key, raw, run_kinds[key])
    run = RunOptions(**rv)
    _check_run(run)

    sweep = None
    if cp.has_section("sweep"):
        sv = dict(cp.items("sweep"))
        for key in sv:
            if key not in ("parameter", "values", "range"):
                raise ConfigError(f"sweep.{key}", "unknown key")
        par = sv.get("parameter", "").strip()
        if par not in sys_fields:
            raise ConfigError("sweep.parameter", f"not a system parameter: {par!r}")
        if ("values" in sv) == ("range" in sv):
            raise ConfigError("sweep.values", "give exactly one of values or range")
        kind = complex if par in _COMPLEX_KEYS else (int if par == "n_max" else float)
        if "values" in sv:
            vals = tuple(_number("sweep", "values", x, kind) for x in sv["values"].split(","))
        else:
            vals = _float_range("sweep", sv["range"])
        sweep = SweepSpec(par, vals)

    echo = {
        "system": {f.name: getattr(system, f.name) for f in fields(SystemParams)},
        "integrator": None if integrator is None else
        {f.name: getattr(integrator, f.name) for f in fields(IntegratorConfig)},
        "integrator_defaults": "exact-eigen for static sources, rk4-fixed dt=5e-7 otherwise"
        if integrator is None else None,
        "run": {f.name: getattr(run, f.name) for f in fields(RunOptions)},
        "sweep": None if sweep is None else {"parameter": sweep.parameter, "values": list(sweep.values)},
    }
    return RunConfig(system, integrator, run, sweep, echo)


def _check_run(run: RunOptions):
    if run.source not in SOURCE_LAYOUT:
        raise ConfigError("run.source", f"unknown source {run.source!r}")
    if run.engine not in ("static-exact", "eq3-rk4", "eff-vacuum"):
        raise ConfigError("run.engine", f"unknown engine {run.engine!r}")
    if run.initial not in LABELS + ("custom",):
        raise ConfigError("run.initial", f"expected one of {LABELS + ('custom',)}")
    if run.initial == "custom" and (run.amplitudes is None or len(run.amplitudes) != 4):
        raise ConfigError("run.amplitudes", "custom initial state needs four amplitudes (ff, fg, gf, gg)")
    if run.amplitudes is not None and not any(abs(a) > 0 for a in run.amplitudes):
        raise ConfigError("run.amplitudes", "amplitudes must not all vanish")
    for key in ("horizon", "sample_dt", "validate_horizon"):
        if getattr(run, key) <= 0:
            raise ConfigError(f"run.{key}", "must be positive")
    if run.n_trajectories < 1:
        raise ConfigError("run.n_trajectories", "must be at least 1")
    if run.prepare not in ("bare", "dressed"):
        raise ConfigError("run.prepare", "expected bare or dressed")


def load_config_text(ref: str) -> str:
    """Read a config path, or a shipped config by name (``paper_sec5``, ``regime_weak``)."""
    path = Path(ref)
    if path.is_file():
        return path.read_text()
    name = ref if ref.endswith(".ini") else f"{ref}.ini"
    res = resources.files("cavity_cz").joinpath("configs").joinpath(name)
    if res.is_file():
        return res.read_text()
    raise ConfigError("config", f"no such file or shipped config: {ref!r}")


# ---------------------------------------------------------------- output


def _clean(x):
    """JSON-ready copy: complex as [re, im], arrays as lists, non-finite as strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_clean(float(x.real)), _clean(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if hasattr(x, "__dataclass_fields__"):
        return _clean({f: getattr(x, f) for f in x.__dataclass_fields__})
    return x


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    return repr(float(x))


def _write(out: str | None, text: str):
    if out is None:
        return
    Path(out).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def _regime_lines(rep) -> list[str]:
    lines = [f"regime check (threshold {rep.threshold:g}):"]
    for name, left, right, ratio in rep.rows():
        flag = "" if ratio >= rep.threshold else "  WARNING"
        lines.append(f"  {name:<48s} {left:>12.6g} / {right:<12.6g} = {ratio:>10.4g}{flag}")
    return lines


def _strict_exit(rep, args) -> int:
    if rep.warnings:
        for c in rep.warnings:
            log.warning("regime condition weak: %s (ratio %.3g)", c.name, c.ratio)
        if args.strict:
            return EXIT_STRICT
    return EXIT_OK


def derive_document(cfg: RunConfig, threshold: float) -> dict:
    p = cfg.system
    d = derived_couplings(p)
    rep = regime_report(p, d, threshold)
    ph = photon_formula_estimate(p, d)
    budget = decoherence_budget(p, d, P_c=ph)
    budget_quoted = decoherence_budget(p, d, P_c=QUOTED_PHOTON)
    return {
        "system": cfg.echo["system"],
        "derived": d.as_dict(),
        "gate_time": {
            "pi_hbar_over_eta_ns": d.t_gate,
            "pi_hbar_over_2eta_ns": d.t_gate_half,
            "quoted_ns": QUOTED_T_GATE,
            "note": "the quoted ~50 ns matches pi*hbar/(2 eta); the CZ condition eta*t = pi gives "
                    "pi*hbar/eta. The symbol in the quoted estimate is undefined, both readings shown.",
        },
        "photon_estimate": {"formula_max_lambda2_over_delta2": ph, "quoted": QUOTED_PHOTON},
        "budget": {"formula_photon": budget, "quoted_photon": budget_quoted},
        "regime": {
            "threshold": threshold,
            "ok": rep.ok,
            "conditions": [{"name": n, "left": l, "right": r, "ratio": q} for n, l, r, q in rep.rows()],
        },
    }


def cmd_derive(cfg: RunConfig, args) -> int:
    doc = derive_document(cfg, args.regime_threshold)
    d = doc["derived"]
    out = ["derived couplings (meV):"]
    for key in ("lambda_A1", "lambda_A2", "lambda_B1", "lambda_B2"):
        re, im = d[key]
        out.append(f"  {key:<10s} {re:.6e}" + (f" {im:+.3e}j" if im else ""))
    for key in ("k_A", "k_B", "l_A1", "l_A2", "l_A3", "l_B1", "l_B2", "l_B3",
                "theta_1", "theta_2", "Delta_1", "Delta_2", "Phi_A", "Phi_B", "eta"):
        out.append(f"  {key:<10s} {d[key]:.6e}")
    g = doc["gate_time"]
    out.append(f"t_gate = pi*hbar/|eta|     = {g['pi_hbar_over_eta_ns']:.4f} ns")
    out.append(f"alt    = pi*hbar/(2|eta|)  = {g['pi_hbar_over_2eta_ns']:.4f} ns  (quoted ~{QUOTED_T_GATE:g} ns)")
    out.append(f"note: {g['note']}")
    b = doc["budget"]["quoted_photon"]
    out.append(f"budget: t_e = {b.t_e:.1f} ns, t_c = {b.t_c:.1f} ns (quoted photon 1/900), "
               f"gates per coherence time = {b.gates_per_coherence}")
    rep = regime_report(cfg.system, None, args.regime_threshold)
    out.extend(_regime_lines(rep))
    print("\n".join(out))
    _write(args.out, dumps(doc))
    return _strict_exit(rep, args)


def _initial_state(run: RunOptions, space: HilbertSpace) -> StateVector:
    if space.basis == "qubit":
        base = {lab: space.basis_state(lab[0], lab[1]) for lab in LABELS}
    else:
        base = {lab: space.basis_state(lab[0], lab[1], 0, 0) for lab in LABELS}
    if run.initial != "custom":
        return base[run.initial]
    v = sum(complex(a) * base[lab].data for a, lab in zip(run.amplitudes, LABELS))
    return StateVector.normalized(space, v)


def evolve_rows(cfg: RunConfig) -> list[tuple]:
    p, run = cfg.system, cfg.run
    space = HilbertSpace.qubit_pair() if run.source == "eff-vacuum" else p.space(SOURCE_LAYOUT[run.source])
    psi0 = _initial_state(run, space)
    if run.with_decay:
        rho0 = DensityMatrix.from_state(psi0)
        tr = evolve_density(run.source, p, collapse_operators(p, space) if space.is_cavity_layout else [],
                            rho0, run.horizon, cfg.integrator)
    else:
        tr = evolve_state(run.source, p, psi0, run.horizon, cfg.integrator, store_states=False)
    obs = tr.observables
    zero = np.zeros_like(tr.times)
    ov = np.asarray(obs["overlap"], dtype=complex)
    cols = [tr.times, obs["norm"]] + [obs.get(k, zero) for k in ("Pe_A", "Pe_B", "n_photon_total", "n_c1", "n_c2")]
    cols += [ov.real, ov.imag]
    return list(zip(*[np.asarray(c, dtype=float) for c in cols]))


def cmd_evolve(cfg: RunConfig, args) -> int:
    rows = evolve_rows(cfg)
    text = _csv_text(EVOLVE_COLUMNS, rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write(args.out, text)
        last = rows[-1]
        print(f"wrote {len(rows)} samples to {args.out}; final norm {last[1]:.12f}")
    return EXIT_OK


def _gate_report(p: SystemParams, cfg: RunConfig, args):
    run = cfg.run
    return run_cz_protocol(
        p, cfg.integrator if run.engine == "eq3-rk4" else None, run.engine, run.with_decay,
        T=run.gate_time, sample_dt=run.sample_dt, calibrate=run.calibrate, prepare=run.prepare,
        n_trajectories=run.n_trajectories, seed=run.seed, regime_threshold=args.regime_threshold,
        threads=args.threads,
    )


def cmd_gate(cfg: RunConfig, args) -> int:
    rep = _gate_report(cfg.system, cfg, args)
    out = [f"engine {rep.engine}, gate time {rep.t_gate_used:.4f} ns (analytic {rep.t_gate_analytic:.4f} ns)"]
    out.append("phases (rad): " + ", ".join(f"{k}={v:.6f}" for k, v in rep.phases.items()))
    out.append(f"conditional phase = {rep.conditional_phase / math.pi:.6f} pi "
               f"(distance from pi mod 2pi: {rep.conditional_phase_error / math.pi:.4f} pi)")
    out.append(f"fidelity: trace {rep.fidelity_trace:.6f}, average {rep.fidelity_avg:.6f}; leakage {rep.leakage:.3e}")
    out.append(f"max P_e: A {rep.maxP_e_A:.4e}, B {rep.maxP_e_B:.4e}; max photon {rep.maxP_photon:.4e}")
    for name, c in rep.checks.items():
        flag = "" if c.get("ok", True) else "  FLAG"
        out.append(f"  {name}: measured {c['measured']:.4e} vs {c['reference']:.4e}{flag}")
    b = rep.budget
    out.append(f"budget: t_e = {b.t_e:.1f} ns, t_c = {b.t_c:.1f} ns, gates = {b.gates_per_coherence}")
    if rep.decay:
        dd = rep.decay
        out.append(f"with decay: F_avg {dd['fidelity_avg']:.6f}, reduction {dd['reduction']:.3e} "
                   f"vs envelope {dd['envelope_reduction']:.3e}")
    out.extend(_regime_lines(rep.regime))
    print("\n".join(out))
    _write(args.out, dumps(rep.as_dict()))
    return _strict_exit(rep.regime, args)


def _sweep_point(cfg: RunConfig, args, value) -> tuple:
    par = cfg.sweep.parameter
    try:
        p = cfg.system.replace(**{par: value})
        derived_couplings(p)
        rep = _gate_report(p, cfg, args)
    except (ResonanceError, GateTimeUndefinedError, LeakageTooLargeError) as exc:
        log.warning("sweep point %s=%r skipped: %s", par, value, exc)
        return (value, "skipped", str(exc).replace("\n", " ")) + (None,) * 7
    return (value, "ok", "", rep.eta_analytic, rep.t_gate_used, rep.conditional_phase,
            rep.fidelity_avg, rep.leakage, max(rep.maxP_e_A, rep.maxP_e_B), rep.maxP_photon)


def sweep_rows(cfg: RunConfig, args) -> list[tuple]:
    vals = cfg.sweep.values
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            return list(pool.map(lambda v: _sweep_point(cfg, _single_thread(args), v), vals))
    return [_sweep_point(cfg, args, v) for v in vals]


def _single_thread(args):
    ns = argparse.Namespace(**vars(args))
    ns.threads = 1
    return ns


def cmd_sweep(cfg: RunConfig, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep", "missing [sweep] section")
    rows = sweep_rows(cfg, args)
    text = _csv_text((cfg.sweep.parameter,) + SWEEP_COLUMNS[1:],
                     [(_fmt_value(r[0]),) + r[1:] for r in rows])
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write(args.out, text)
        print(f"wrote {len(rows)} sweep rows to {args.out}")
    if not any(r[1] == "ok" for r in rows):
        log.error("no sweep point could be evaluated")
        return EXIT_EMPTY
    return EXIT_OK


def _fmt_value(v) -> str:
    if isinstance(v, complex):
        return repr(v)
    return repr(float(v)) if not isinstance(v, int) else str(v)


def validate_document(cfg: RunConfig) -> dict:
    """Four inputs under every engine; pairwise projected-block overlaps and
    conditional-phase rates relative to the static model."""
    p, run = cfg.system, cfg.run
    T = run.validate_horizon
    rk = cfg.integrator if cfg.integrator is not None and cfg.integrator.method != "exact-eigen" else \
        IntegratorConfig(method="rk4-fixed", dt=5e-7)
    engines = {}
    # vacuum-sector amplitudes carry no frame phase, so blocks compare directly
    for name in ("static-exact", "eq3-rk4", "eff-vacuum"):
        trajs, inputs = evolve_inputs(p, name, T, run.sample_dt, rk if name == "eq3-rk4" else None)
        engines[name] = (trajs, inputs)
    space_c = p.space("c")
    for name, src in (("eff1", "eff1"), ("eff2", "eff2")):
        inputs = {lab: space_c.basis_state(lab[0], lab[1], 0, 0) for lab in LABELS}
        if src == "eff1":
            ham = build_source(src, p, space_c)
            dt = run.sample_dt
            if ham.max_frequency > 0:
                dt = min(dt, 0.5 * STABILITY_LIMIT * HBAR / ham.max_frequency)
            every = max(1, int(round(run.sample_dt / dt)))
            ecfg = IntegratorConfig(method="rk4-fixed", dt=run.sample_dt / every, sample_every=every)
        else:
            ecfg = IntegratorConfig(dt=run.sample_dt)
        trajs = {lab: evolve_state(src, p, inputs[lab], T, ecfg, store_states=False) for lab in LABELS}
        engines[name] = (trajs, inputs)

    blocks, rates, notes = {}, {}, {}
    for name, (trajs, inputs) in engines.items():
        blocks[name] = projected_block({k: t.final for k, t in trajs.items()}, inputs)
        try:
            rates[name] = conditional_rate(extract_phases(trajs), fit=True)
        except CavityCZError as exc:
            rates[name] = math.nan
            notes[name] = str(exc)

    def block_overlap(a, b):
        # phase-sensitive: |Tr(Ma^+ Mb)|^2 / (|Ma|^2 |Mb|^2), Frobenius norms
        x, y = blocks[a], blocks[b]
        return float(abs(np.vdot(x, y)) ** 2 / (np.vdot(x, x).real * np.vdot(y, y).real))

    names = list(engines)
    pairs = [{"a": a, "b": b, "block_overlap": block_overlap(a, b)}
             for i, a in enumerate(names) for b in names[i + 1:]]

    # full-state check of the frame identity on the configured input
    lab = run.initial if run.initial != "custom" else "gg"
    st = engines["static-exact"][0][lab].final
    ed = engines["eq3-rk4"][0][lab].final
    mapped = frame_map(StateVector(p.space("a"), st), T, p, "static->eq3").data
    ed_n = ed / np.linalg.norm(ed)
    full = float(abs(np.vdot(mapped, ed_n)) ** 2)

    ref = rates["static-exact"]
    rate_dev = {k: (v - ref) / ref if ref else (0.0 if v == ref else math.nan) for k, v in rates.items()}
    checks = {
        "static_vs_eq3_full_overlap": {"value": full, "threshold": 1 - run.overlap_threshold,
                                       "pass": full >= 1 - run.overlap_threshold},
        "eff_vacuum_vs_static_rate": {"value": rate_dev["eff-vacuum"], "tolerance": run.rate_tolerance,
                                      "pass": abs(rate_dev["eff-vacuum"]) <= run.rate_tolerance},
    }
    return {
        "horizon_ns": T,
        "initial": lab,
        "eq3_integrator": {"method": rk.method, "dt": rk.dt},
        "eq3_norm_drift": engines["eq3-rk4"][0][lab].info["norm_drift"],
        "pairwise": pairs,
        "conditional_rate_meV": rates,
        "rate_deviation_vs_static": rate_dev,
        "checks": checks,
        "notes": notes,
    }


def cmd_validate(cfg: RunConfig, args) -> int:
    doc = validate_document(cfg)
    out = [f"validation over {doc['horizon_ns']} ns (eq3 integrator {doc['eq3_integrator']})"]
    for row in doc["pairwise"]:
        out.append(f"  {row['a']:>12s} vs {row['b']:<12s} block infidelity {1 - row['block_overlap']:.3e}")
    for k, v in doc["conditional_rate_meV"].items():
        out.append(f"  rate {k:<12s} {v:.6e} meV  (deviation {doc['rate_deviation_vs_static'][k]:+.3%})")
    for k, c in doc["checks"].items():
        out.append(f"  {k}: {'PASS' if c['pass'] else 'FAIL'} (value {c['value']!r})")
    print("\n".join(out))
    _write(args.out, dumps(doc))
    return EXIT_OK


COMMANDS = {"derive": cmd_derive, "evolve": cmd_evolve, "gate": cmd_gate,
            "sweep": cmd_sweep, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cavity-cz", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI path or shipped name (paper_sec5, regime_weak)")
    ap.add_argument("--out", help="output file (JSON for derive/gate/validate, CSV for evolve/sweep)")
    ap.add_argument("--strict", action="store_true", help="exit 3 when a regime condition is weak")
    ap.add_argument("--seed", type=int, help="override run.seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for gate inputs and sweeps")
    ap.add_argument("--regime-threshold", type=float, default=10.0,
                    help="minimum large/small scale ratio before a warning (default 10)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONFIG
    try:
        cfg = parse_config(load_config_text(args.config))
        if args.seed is not None:
            run = RunOptions(**{**{f.name: getattr(cfg.run, f.name) for f in fields(RunOptions)},
                                "seed": args.seed})
            cfg = RunConfig(cfg.system, cfg.integrator, run, cfg.sweep, cfg.echo)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except GateTimeUndefinedError as exc:
        log.error("gate time undefined: %s", exc)
        return EXIT_DERIVE
    except ResonanceError as exc:
        log.error("%s", exc)
        return EXIT_DERIVE
    except MaxStepsExceededError as exc:
        log.error("integrator budget exceeded: %s", exc)
        return EXIT_BUDGET
    except (CavityCZError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("engine error: %s", exc)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
