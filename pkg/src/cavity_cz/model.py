"""Physical parameters, closed-form couplings and Hamiltonian constructors.

Every Hamiltonian is returned in meV on a tagged layout: the lab picture
(``basis="a"``) carries the cavity modes a_A, a_B, while the normal-mode
pictures (``basis="c"``) carry c1 = (a_A - a_B)/sqrt(2) and
c2 = (a_A + a_B)/sqrt(2). Constructors accept either layout and substitute
the mode operators, which is exact for the linear and bilinear terms used
here even in a truncated Fock space.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .errors import GateTimeUndefinedError, ResonanceError
from .qalgebra import HBAR, CavityOperators, HilbertSpace, Operator, embed

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SystemParams:
    """Physical inputs. Energies in meV, lifetimes in ns."""

    g_A: complex
    g_B: complex
    Omega_A: complex
    Omega_B: complex
    Delta_A: float
    Delta_B: float
    delta: float
    nu: float
    tau_c: float = 1.0
    tau_e: float = 1.4
    n_max: int = 2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not cmath.isfinite(complex(v)):
                raise ValueError(f"{f.name} must be finite, got {v!r}")
        for name in ("Delta_A", "Delta_B", "delta", "nu", "tau_c", "tau_e"):
            if complex(getattr(self, name)).imag != 0:
                raise ValueError(f"{name} must be real")
        if self.tau_c <= 0 or self.tau_e <= 0:
            raise ValueError("lifetimes tau_c, tau_e must be positive")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @classmethod
    def paper_sec5(cls, n_max: int = 2) -> "SystemParams":
        """Reference parameter set: g_A=0.1, g_B=0.08, Omega_A=10, Omega_B=13.75,
        Delta_A=200, Delta_B=220, delta=2 g_A, nu=12 g_A (meV), tau_c=1, tau_e=1.4 ns."""
        return cls(
            g_A=0.1, g_B=0.08, Omega_A=10.0, Omega_B=13.75,
            Delta_A=200.0, Delta_B=220.0, delta=0.2, nu=1.2,
            tau_c=1.0, tau_e=1.4, n_max=n_max,
        )

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def scaled(self, s: float) -> "SystemParams":
        """Scale all couplings and drives jointly, detunings fixed."""
        return replace(self, g_A=s * self.g_A, g_B=s * self.g_B,
                       Omega_A=s * self.Omega_A, Omega_B=s * self.Omega_B)

    def dot(self, j: str) -> tuple[complex, complex, float]:
        """(g_j, Omega_j, Delta_j) for dot ``"A"`` or ``"B"``."""
        return (complex(getattr(self, f"g_{j}")), complex(getattr(self, f"Omega_{j}")),
                float(getattr(self, f"Delta_{j}")))

    def space(self, basis: str = "a") -> HilbertSpace:
        return HilbertSpace.dots_and_modes(self.n_max, basis)


def _div(num, den: float, name: str):
    # A vanishing numerator means the corresponding process is switched off;
    # only a live term on a resonant denominator is an error.
    if num == 0:
        return 0.0 * num
    if den == 0:
        raise ResonanceError(name, den)
    return num / den


def _lambdas(p: SystemParams, j: str) -> tuple[complex, complex]:
    g, om, D = p.dot(j)
    pref = g * om.conjugate() / 4
    lam1 = _div(pref, D + p.delta + p.nu, f"Delta_{j}+delta+nu") + _div(pref, D, f"Delta_{j}")
    lam2 = _div(pref, D + p.delta - p.nu, f"Delta_{j}+delta-nu") + _div(pref, D, f"Delta_{j}")
    return complex(lam1), complex(lam2)


def _k_l(p: SystemParams, j: str) -> tuple[float, float, float, float]:
    g, om, D = p.dot(j)
    g2 = abs(g) ** 2
    k = (_div(g2 / 8, D + p.delta + p.nu, f"Delta_{j}+delta+nu")
         + _div(g2 / 8, D + p.delta - p.nu, f"Delta_{j}+delta-nu"))
    l1 = _div(g2, 4 * (D + p.delta - p.nu), f"Delta_{j}+delta-nu")
    l2 = _div(g2, 4 * (D + p.delta + p.nu), f"Delta_{j}+delta+nu")
    l3 = _div(abs(om) ** 2, D, f"Delta_{j}")
    return float(k), float(l1), float(l2), float(l3)


@dataclass(frozen=True)
class DerivedCouplings:
    """Closed-form coefficients of the adiabatically eliminated model (meV)."""

    lambda_A1: complex
    lambda_A2: complex
    lambda_B1: complex
    lambda_B2: complex
    k_A: float
    k_B: float
    l_A1: float
    l_A2: float
    l_A3: float
    l_B1: float
    l_B2: float
    l_B3: float
    theta_1: float
    theta_2: float
    Delta_1: float
    Delta_2: float
    Phi_A: float
    Phi_B: float
    eta: float
    t_gate: float = field(default=math.inf)

    @property
    def t_gate_half(self) -> float:
        """pi*hbar/(2 eta), the alternative gate-time reading."""
        return self.t_gate / 2

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [v.real, v.imag] if isinstance(v, complex) else v
        out["t_gate_half"] = self.t_gate_half
        return out


def derived_couplings(p: SystemParams, strict: bool = True) -> DerivedCouplings:
    """Evaluate lambda, k, l, Phi, eta and the gate time for ``p``.

    With ``strict`` a vanishing eta raises ``GateTimeUndefinedError``;
    otherwise ``t_gate`` is reported as infinite.
    """
    lA1, lA2 = _lambdas(p, "A")
    lB1, lB2 = _lambdas(p, "B")
    kA, lA_1, lA_2, lA_3 = _k_l(p, "A")
    kB, lB_1, lB_2, lB_3 = _k_l(p, "B")
    dm, dp = p.delta - p.nu, p.delta + p.nu

    def phi(l1, l2, l3):
        return float(_div(abs(l2) ** 2, dm, "delta-nu") + _div(abs(l1) ** 2, dp, "delta+nu") - l3)

    c1 = lA1 * lB1.conjugate()
    c2 = lA2 * lB2.conjugate()
    theta_1 = cmath.phase(c1) if c1 != 0 else 0.0
    theta_2 = cmath.phase(c2) if c2 != 0 else 0.0
    eta = 2 * float(_div(abs(c1) * math.cos(theta_1), dp, "delta+nu")
                    + _div(abs(c2) * math.cos(theta_2), p.nu - p.delta, "nu-delta"))
    if eta == 0:
        if strict:
            raise GateTimeUndefinedError("conditional phase rate eta vanishes; gate time undefined")
        t_gate = math.inf
    else:
        t_gate = math.pi * HBAR / abs(eta)
    return DerivedCouplings(
        lambda_A1=lA1, lambda_A2=lA2, lambda_B1=lB1, lambda_B2=lB2,
        k_A=kA, k_B=kB,
        l_A1=lA_1, l_A2=lA_2, l_A3=lA_3, l_B1=lB_1, l_B2=lB_2, l_B3=lB_3,
        theta_1=theta_1, theta_2=theta_2, Delta_1=dm, Delta_2=dp,
        Phi_A=phi(lA1, lA2, lA_3), Phi_B=phi(lB1, lB2, lB_3), eta=eta, t_gate=t_gate,
    )


class DrivenHamiltonian:
    """``H(t) = static + sum_k [amp_k exp(i omega_k t/hbar) O_k + h.c.]``.

    Frequencies are energies in meV; ``omega_k / HBAR`` is the angular
    frequency in rad/ns.
    """

    def __init__(self, space: HilbertSpace, static: np.ndarray | None = None, terms=()):
        self.space = space
        n = space.total_dim
        self.static = np.zeros((n, n), complex) if static is None else np.asarray(static, complex)
        self.terms = [(complex(a), float(w), np.asarray(op, complex)) for a, w, op in terms]

    @property
    def is_time_independent(self) -> bool:
        return all(w == 0 for _, w, _ in self.terms)

    @property
    def max_frequency(self) -> float:
        """Largest phase rate (meV) plus the static part's spectral norm."""
        w = max((abs(w) for a, w, _ in self.terms if a != 0), default=0.0)
        return w + float(np.linalg.norm(self.static, 2))

    def at(self, t: float) -> Operator:
        h = self.static.copy()
        for amp, w, op in self.terms:
            x = amp * np.exp(1j * w * t / HBAR) * op
            h += x + x.conj().T
        return Operator(self.space, h)


def mode_operators(space: HilbertSpace) -> dict[str, np.ndarray]:
    ops = CavityOperators(space)
    m0, m1 = ops.mode(0), ops.mode(1)
    if space.basis == "a":
        aA, aB = m0, m1
        c1, c2 = (aA - aB) / SQRT2, (aA + aB) / SQRT2
    elif space.basis == "c":
        c1, c2 = m0, m1
        aA, aB = (c1 + c2) / SQRT2, (c2 - c1) / SQRT2
    else:
        raise ValueError(f"cavity Hamiltonians need an 'a' or 'c' layout, got {space.basis!r}")
    return {"aA": aA, "aB": aB, "c1": c1, "c2": c2}


def _dag(m):
    return m.conj().T


def _space(p: SystemParams, space: HilbertSpace | None, default: str) -> HilbertSpace:
    if space is None:
        return p.space(default)
    if space.n_max != p.n_max:
        space = HilbertSpace.dots_and_modes(p.n_max, space.basis)
    return space


def eq1_terms(p: SystemParams, space: HilbertSpace | None = None) -> DrivenHamiltonian:
    """Lab-picture model: sum_j (g_j a_j e^{i Delta^C_j t} + Omega_j e^{i Delta_j t}) s_j^+ + nu a_A^+ a_B + h.c."""
    space = _space(p, space, "a")
    ops = CavityOperators(space)
    m = mode_operators(space)
    terms = []
    for idx, j in enumerate("AB"):
        g, om, D = p.dot(j)
        sp = ops.dot(idx, "sigma_plus")
        terms.append((g, D + p.delta, m["a" + j] @ sp))
        terms.append((om, D, sp))
    hop = p.nu * _dag(m["aA"]) @ m["aB"]
    return DrivenHamiltonian(space, hop + _dag(hop), terms)


def eq3_terms(p: SystemParams, space: HilbertSpace | None = None) -> DrivenHamiltonian:
    """Interaction picture with respect to the normal-mode splitting."""
    space = _space(p, space, "c")
    ops = CavityOperators(space)
    m = mode_operators(space)
    terms = []
    for idx, (j, sign) in enumerate((("A", 1.0), ("B", -1.0))):
        g, om, D = p.dot(j)
        sp = ops.dot(idx, "sigma_plus")
        terms.append((g / SQRT2, D + p.delta - p.nu, m["c2"] @ sp))
        terms.append((sign * g / SQRT2, D + p.delta + p.nu, m["c1"] @ sp))
        terms.append((om, D, sp))
    return DrivenHamiltonian(space, None, terms)


def hamiltonian_eq1(t: float, p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    return eq1_terms(p, space).at(t)


def hamiltonian_eq3(t: float, p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    return eq3_terms(p, space).at(t)


def normal_mode_splitting(p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    """``H0 = nu (c2^+ c2 - c1^+ c1)`` on the given layout."""
    space = _space(p, space, "c")
    m = mode_operators(space)
    return Operator(space, p.nu * (_dag(m["c2"]) @ m["c2"] - _dag(m["c1"]) @ m["c1"]))


def hamiltonian_static(p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    """Time-independent rotating-frame model.

    ``sum_j Delta_j |e><e|_j - delta (n_A + n_B) + sum_j (g_j a_j s_j^+ + Omega_j s_j^+ + h.c.)
    + nu (a_A^+ a_B + h.c.)``. Both drives share one laser frequency, so a
    single frame removes all explicit time dependence.
    """
    space = _space(p, space, "a")
    ops = CavityOperators(space)
    m = mode_operators(space)
    h = -p.delta * (_dag(m["aA"]) @ m["aA"] + _dag(m["aB"]) @ m["aB"])
    hop = p.nu * _dag(m["aA"]) @ m["aB"]
    h = h + hop + _dag(hop)
    for idx, j in enumerate("AB"):
        g, om, D = p.dot(j)
        sp = ops.dot(idx, "sigma_plus")
        v = (g * m["a" + j] + om * ops.identity) @ sp
        h = h + D * ops.dot(idx, "proj_e") + v + _dag(v)
    return Operator(space, h)


def frame_generator(p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    """Diagonal part of the static model in the normal-mode layout."""
    hc = hamiltonian_static(p, _space(p, space, "c") if space is None else space)
    return Operator(hc.space, np.diag(np.diag(hc.matrix)))


def _ground_projectors(space: HilbertSpace) -> tuple[np.ndarray, np.ndarray]:
    ops = CavityOperators(space)
    return ops.dot(0, "proj_g"), ops.dot(1, "proj_g")


def eff1_terms(p: SystemParams, space: HilbertSpace | None = None) -> DrivenHamiltonian:
    """First-stage effective model with the excited level eliminated.

    The cross-mode term is taken as (k_A P_A - k_B P_B) c1 c2^+ without an
    extra trailing projector, the reading whose second-order square gives the
    (k_A P_A - k_B P_B)^2 term of the second stage.
    """
    space = _space(p, space, "c")
    d = derived_couplings(p, strict=False)
    m = mode_operators(space)
    PA, PB = _ground_projectors(space)
    n1, n2 = _dag(m["c1"]) @ m["c1"], _dag(m["c2"]) @ m["c2"]
    eye = np.eye(space.total_dim)
    static = -((d.l_A1 * n1 + d.l_A2 * n2 + d.l_A3 * eye) @ PA
               + (d.l_B1 * n1 + d.l_B2 * n2 + d.l_B3 * eye) @ PB)
    terms = [
        (-1.0, p.delta - p.nu, m["c2"] @ (d.lambda_A2 * PA - d.lambda_B2 * PB)),
        (-1.0, p.delta + p.nu, m["c1"] @ (d.lambda_A1 * PA + d.lambda_B1 * PB)),
        (-1.0, -2 * p.nu, (d.k_A * PA - d.k_B * PB) @ m["c1"] @ _dag(m["c2"])),
    ]
    return DrivenHamiltonian(space, static, terms)


def h_eff_stage1(t: float, p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    return eff1_terms(p, space).at(t)


def h_eff_stage2(p: SystemParams, space: HilbertSpace | None = None) -> Operator:
    """Second-stage model; commutes with both normal-mode number operators."""
    space = _space(p, space, "c")
    d = derived_couplings(p, strict=False)
    m = mode_operators(space)
    PA, PB = _ground_projectors(space)
    n1, n2 = _dag(m["c1"]) @ m["c1"], _dag(m["c2"]) @ m["c2"]
    eye = np.eye(space.total_dim)
    x2 = d.lambda_A2 * PA - d.lambda_B2 * PB
    x1 = d.lambda_A1 * PA + d.lambda_B1 * PB
    kk = d.k_A * PA - d.k_B * PB
    h = (_div(1.0, p.delta - p.nu, "delta-nu") * (x2 @ _dag(x2)) if x2.any() else 0 * eye)
    h = h + (_div(1.0, p.delta + p.nu, "delta+nu") * (x1 @ _dag(x1)) if x1.any() else 0 * eye)
    if kk.any():
        h = h + _div(1.0, 2 * p.nu, "2nu") * (kk @ kk) @ (n1 - n2)
    h = h - ((d.l_A1 * n1 + d.l_A2 * n2 + d.l_A3 * eye) @ PA
             + (d.l_B1 * n1 + d.l_B2 * n2 + d.l_B3 * eye) @ PB)
    return Operator(space, h)


def h_eff_vacuum(p: SystemParams) -> Operator:
    """Vacuum-sector model on the qubit pair, basis ff, fg, gf, gg."""
    space = HilbertSpace.qubit_pair()
    d = derived_couplings(p, strict=False)
    pg = np.diag([0.0, 1.0])
    PA, PB = embed(pg, 0, space).matrix, embed(pg, 1, space).matrix
    x2 = d.lambda_A2 * PA - d.lambda_B2 * PB
    x1 = d.lambda_A1 * PA + d.lambda_B1 * PB
    h = -d.l_A3 * PA - d.l_B3 * PB
    if x2.any():
        h = h + _div(1.0, p.delta - p.nu, "delta-nu") * (x2 @ _dag(x2))
    if x1.any():
        h = h + _div(1.0, p.delta + p.nu, "delta+nu") * (x1 @ _dag(x1))
    return Operator(space, h)


class CollapseChannel(NamedTuple):
    operator: Operator
    rate: float  # 1/ns
    name: str


def collapse_operators(p: SystemParams, space: HilbertSpace | None = None) -> list[CollapseChannel]:
    """Cavity loss on each mode at 1/tau_c, dot relaxation |g><e| at 1/tau_e."""
    space = _space(p, space, "a")
    ops = CavityOperators(space)
    names = ("a_A", "a_B") if space.basis == "a" else ("c_1", "c_2")
    out = [CollapseChannel(Operator(space, ops.mode(k)), 1.0 / p.tau_c, names[k]) for k in (0, 1)]
    for idx, j in enumerate("AB"):
        out.append(CollapseChannel(Operator(space, ops.dot(idx, "sigma_minus")), 1.0 / p.tau_e, f"sigma_{j}"))
    return out


@dataclass(frozen=True)
class RegimeCondition:
    name: str
    left: float
    right: float

    @property
    def ratio(self) -> float:
        if self.right == 0:
            return math.inf
        return self.left / self.right


@dataclass(frozen=True)
class RegimeReport:
    conditions: tuple[RegimeCondition, ...]
    threshold: float = 10.0

    @property
    def min_ratio(self) -> float:
        return min(c.ratio for c in self.conditions)

    @property
    def warnings(self) -> list[RegimeCondition]:
        return [c for c in self.conditions if c.ratio < self.threshold]

    @property
    def ok(self) -> bool:
        return not self.warnings

    def rows(self) -> list[tuple[str, float, float, float]]:
        return [(c.name, c.left, c.right, c.ratio) for c in self.conditions]


def regime_report(p: SystemParams, d: DerivedCouplings | None = None, threshold: float = 10.0) -> RegimeReport:
    """Ratios of the large and small scales behind the adiabatic elimination.

    The primed detuning in the validity condition is read as the cavity
    detuning Delta_j + delta.
    """
    conds = []
    small = {}
    for j in "AB":
        g, om, D = p.dot(j)
        right = max(abs(p.nu), abs(p.delta), abs(g), abs(om))
        conds.append(RegimeCondition(f"|Delta_{j}| >> max(nu, delta, |g_{j}|, |Omega_{j}|)", abs(D), right))
        conds.append(RegimeCondition(f"|Delta_{j}+delta| >> max(nu, delta, |g_{j}|, |Omega_{j}|)",
                                     abs(D + p.delta), right))
        if d is not None:
            l1, l2 = getattr(d, f"lambda_{j}1"), getattr(d, f"lambda_{j}2")
            k = getattr(d, f"k_{j}")
        else:
            try:
                l1, l2 = _lambdas(p, j)
                k = _k_l(p, j)[0]
            except ResonanceError:
                l1 = l2 = k = math.inf
        small[j] = max(abs(l1), abs(l2), abs(k))
    lam = max(small.values())
    conds.append(RegimeCondition("|delta+nu| >> max(|lambda|, k)", abs(p.delta + p.nu), lam))
    conds.append(RegimeCondition("|nu-delta| >> max(|lambda|, k)", abs(p.nu - p.delta), lam))
    conds.append(RegimeCondition("2 nu >> max(|lambda|, k)", abs(2 * p.nu), lam))
    return RegimeReport(tuple(conds), threshold)
