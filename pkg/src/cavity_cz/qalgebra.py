"""Dense operator algebra for two three-level dots and two truncated boson modes.

Basis conventions are fixed so that serialized output is bit-stable:

* a dot factor is ordered (g, f, e),
* a boson factor is ordered by photon number 0..n_max,
* the qubit-pair space used by the vacuum effective model is ordered
  ff, fg, gf, gg (first label is dot A).

Hamiltonians carry meV, times are ns, and ``HBAR`` converts between them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np
import scipy.linalg

from .errors import (
    HermiticityError,
    InvalidStateError,
    InvalidTruncationError,
    LayoutMismatchError,
)

HBAR = 6.582119569e-4  # meV ns (CODATA)

DOT_LEVELS = ("g", "f", "e")
QUBIT_LEVELS = ("f", "g")


@dataclass(frozen=True)
class QDot:
    name: str = "dot"

    @property
    def dim(self) -> int:
        return 3

    def index(self, label) -> int:
        return DOT_LEVELS.index(label)


@dataclass(frozen=True)
class BosonMode:
    n_max: int
    name: str = "mode"

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InvalidTruncationError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def index(self, label) -> int:
        n = int(label)
        if not 0 <= n <= self.n_max:
            raise IndexError(f"photon number {n} outside 0..{self.n_max}")
        return n


@dataclass(frozen=True)
class Qubit:
    """Two-level factor spanned by the dot ground states (f, g)."""

    name: str = "qubit"

    @property
    def dim(self) -> int:
        return 2

    def index(self, label) -> int:
        return QUBIT_LEVELS.index(label)


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor-product layout.

    ``basis`` tags what the boson factors represent: ``"a"`` for the lab
    cavity modes, ``"c"`` for the normal modes, ``"qubit"`` for the
    two-qubit space and ``None`` for ad-hoc spaces.
    """

    factors: tuple
    basis: str | None = None

    @classmethod
    def dots_and_modes(cls, n_max: int = 2, basis: str = "a") -> "HilbertSpace":
        if basis not in ("a", "c"):
            raise ValueError(f"basis must be 'a' or 'c', got {basis!r}")
        names = ("A", "B") if basis == "a" else ("1", "2")
        return cls(
            (QDot("A"), QDot("B"), BosonMode(n_max, names[0]), BosonMode(n_max, names[1])),
            basis,
        )

    @classmethod
    def qubit_pair(cls) -> "HilbertSpace":
        return cls((Qubit("A"), Qubit("B")), "qubit")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_max(self) -> int | None:
        modes = [f for f in self.factors if isinstance(f, BosonMode)]
        return modes[0].n_max if modes else None

    @property
    def is_cavity_layout(self) -> bool:
        return self.basis in ("a", "c")

    def with_basis(self, basis: str) -> "HilbertSpace":
        return HilbertSpace.dots_and_modes(self.n_max, basis)

    def index(self, *labels) -> int:
        if len(labels) != len(self.factors):
            raise IndexError(f"expected {len(self.factors)} labels, got {len(labels)}")
        idx = 0
        for f, lab in zip(self.factors, labels):
            idx = idx * f.dim + f.index(lab)
        return idx

    def basis_state(self, *labels) -> "StateVector":
        v = np.zeros(self.total_dim, dtype=complex)
        v[self.index(*labels)] = 1.0
        return StateVector(self, v)

    def qubit_vacuum_indices(self) -> np.ndarray:
        """Indices of ff, fg, gf, gg (tensor vacuum for cavity layouts)."""
        labels = [(a, b) for a in QUBIT_LEVELS for b in QUBIT_LEVELS]
        if self.basis == "qubit":
            return np.array([self.index(a, b) for a, b in labels])
        return np.array([self.index(a, b, 0, 0) for a, b in labels])


def _check_same(x: HilbertSpace, y: HilbertSpace):
    if x != y:
        raise LayoutMismatchError(f"layout mismatch: {x} vs {y}")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise LayoutMismatchError(f"matrix shape {m.shape} does not fit space of dim {n}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Operator":
        return cls(space, np.eye(space.total_dim))

    @classmethod
    def zero(cls, space: HilbertSpace) -> "Operator":
        return cls(space, np.zeros((space.total_dim,) * 2))

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __add__(self, other: "Operator") -> "Operator":
        _check_same(self.space, other.space)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same(self.space, other.space)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_same(self.space, other.space)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            _check_same(self.space, other.space)
            return self.matrix @ other.data
        return NotImplemented

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.matrix), initial=0.0))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def expect(self, psi: "StateVector") -> complex:
        _check_same(self.space, psi.space)
        return complex(np.vdot(psi.data, self.matrix @ psi.data))


def commutator(x: Operator, y: Operator) -> Operator:
    return x @ y - y @ x


@dataclass(frozen=True, eq=False)
class StateVector:
    space: HilbertSpace
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _frozen(self.data).reshape(-1)
        if v.shape != (self.space.total_dim,):
            raise LayoutMismatchError(f"vector length {v.size} does not fit dim {self.space.total_dim}")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > 1e-9:
            raise InvalidStateError(f"state norm {norm!r} differs from 1 by more than 1e-9")
        object.__setattr__(self, "data", v)

    @classmethod
    def normalized(cls, space: HilbertSpace, amplitudes) -> "StateVector":
        v = np.asarray(amplitudes, dtype=complex)
        return cls(space, v / np.linalg.norm(v))

    def overlap(self, other: "StateVector") -> complex:
        _check_same(self.space, other.space)
        return complex(np.vdot(self.data, other.data))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = _frozen(self.data)
        n = self.space.total_dim
        if r.shape != (n, n):
            raise LayoutMismatchError(f"density matrix shape {r.shape} does not fit dim {n}")
        if np.max(np.abs(r - r.conj().T), initial=0.0) > 1e-9:
            raise InvalidStateError("density matrix is not Hermitian")
        tr = np.trace(r).real
        if abs(tr - 1.0) > 1e-9:
            raise InvalidStateError(f"density matrix trace {tr!r} differs from 1")
        lo = np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0]
        if lo < -1e-9:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lo!r}")
        object.__setattr__(self, "data", r)

    @classmethod
    def from_state(cls, psi: StateVector) -> "DensityMatrix":
        return cls(psi.space, np.outer(psi.data, psi.data.conj()))


def _single_factor(factor) -> HilbertSpace:
    return HilbertSpace((factor,))


def fock_annihilator(n_max: int) -> Operator:
    """Truncated ladder operator with ``<n-1|a|n> = sqrt(n)``."""
    if int(n_max) != n_max or n_max < 1:
        raise InvalidTruncationError(f"n_max must be an integer >= 1, got {n_max!r}")
    n_max = int(n_max)
    return Operator(_single_factor(BosonMode(n_max)), np.diag(np.sqrt(np.arange(1, n_max + 1)), 1))


_QD_ELEMENTS = {
    "sigma_plus": (2, 0),   # |e><g|
    "sigma_minus": (0, 2),  # |g><e|
    "proj_g": (0, 0),
    "proj_f": (1, 1),
    "proj_e": (2, 2),
}


def qd_operator(kind: str) -> Operator:
    """Single-dot operator in the (g, f, e) basis."""
    try:
        i, j = _QD_ELEMENTS[kind]
    except KeyError:
        raise ValueError(f"unknown dot operator {kind!r}; choose from {sorted(_QD_ELEMENTS)}") from None
    m = np.zeros((3, 3))
    m[i, j] = 1.0
    return Operator(_single_factor(QDot()), m)


def embed(op: Operator | np.ndarray, factor_index: int, space: HilbertSpace) -> Operator:
    """Lift a single-factor operator to ``space`` with identities elsewhere."""
    if not 0 <= factor_index < len(space.factors):
        raise IndexError(f"factor index {factor_index} out of range for {len(space.factors)} factors")
    m = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    d = space.dims[factor_index]
    if m.shape != (d, d):
        raise LayoutMismatchError(f"operator of shape {m.shape} cannot act on factor of dim {d}")
    mats = [m if k == factor_index else np.eye(dk) for k, dk in enumerate(space.dims)]
    return Operator(space, reduce(np.kron, mats))


def hermiticity_defect(op: Operator | np.ndarray) -> float:
    m = op.matrix if isinstance(op, Operator) else np.asarray(op)
    return float(np.max(np.abs(m - m.conj().T), initial=0.0))


def check_hermitian(op: Operator, rtol: float = 1e-10) -> None:
    defect = hermiticity_defect(op)
    if defect > rtol * max(op.scale, 1e-300):
        raise HermiticityError(f"operator is not Hermitian (defect {defect:.3e}, scale {op.scale:.3e})")


class HermitianSpectrum:
    """Cached eigendecomposition of a Hermitian generator.

    Evaluating ``exp(-i H t / hbar)`` for many times costs one ``eigh`` plus
    O(dim^2) per time.
    """

    def __init__(self, H: Operator):
        check_hermitian(H)
        self.space = H.space
        h = 0.5 * (H.matrix + H.matrix.conj().T)
        self.energies, self.vectors = np.linalg.eigh(h)

    def propagator(self, t: float) -> Operator:
        ph = np.exp(-1j * self.energies * (t / HBAR))
        return Operator(self.space, (self.vectors * ph) @ self.vectors.conj().T)

    def coefficients(self, psi0: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ psi0

    def evolve(self, coeffs: np.ndarray, times: np.ndarray) -> np.ndarray:
        """States at ``times`` (rows) from eigenbasis coefficients."""
        ph = np.exp(-1j * np.outer(times, self.energies) / HBAR)
        return (ph * coeffs) @ self.vectors.T


def propagator(H: Operator, t: float) -> Operator:
    """Unitary ``exp(-i H t / hbar)`` for a Hermitian ``H`` in meV and ``t`` in ns."""
    return HermitianSpectrum(H).propagator(t)


def expm_nonhermitian(G: Operator | np.ndarray, t: float) -> np.ndarray:
    """``exp(-i G t / hbar)`` for a general (non-Hermitian) generator.

    Used by the quantum-trajectory solver, where ``G`` carries the
    anti-Hermitian decay part. No unitarity is implied.
    """
    m = G.matrix if isinstance(G, Operator) else np.asarray(G, dtype=complex)
    return scipy.linalg.expm(-1j * m * (t / HBAR))


def normal_mode_rotation(space: HilbertSpace) -> Operator:
    """Unitary taking a-basis amplitudes to c-basis amplitudes.

    Implements ``c1 = (a_A - a_B)/sqrt(2)``, ``c2 = (a_A + a_B)/sqrt(2)`` as
    the exponential of the truncated beam-splitter generator. It is exact on
    every sector with total photon number <= n_max and unitary everywhere.
    """
    if space.basis != "a":
        raise LayoutMismatchError("normal_mode_rotation expects an a-basis layout")
    a = fock_annihilator(space.n_max).matrix
    aA = embed(a, 2, space).matrix
    aB = embed(a, 3, space).matrix
    gen = aA.conj().T @ aB - aB.conj().T @ aA
    return Operator(space.with_basis("c"), scipy.linalg.expm(-np.pi / 4 * gen))


@dataclass(frozen=True)
class CavityOperators:
    """Embedded building blocks for a dots-and-modes layout."""

    space: HilbertSpace

    @cached_property
    def _a(self) -> np.ndarray:
        return fock_annihilator(self.space.n_max).matrix

    def mode(self, k: int) -> np.ndarray:
        """Annihilator of boson factor ``k`` (0 or 1) as a dense matrix."""
        return embed(self._a, 2 + k, self.space).matrix

    def number(self, k: int) -> np.ndarray:
        m = self.mode(k)
        return m.conj().T @ m

    def dot(self, j: int, kind: str) -> np.ndarray:
        return embed(qd_operator(kind), j, self.space).matrix

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.space.total_dim, dtype=complex)
