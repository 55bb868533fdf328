"""Qubit and ion-photon two-qubit state algebra.

Computational ordering is ``|R,-3/2>, |R,+1/2>, |L,-3/2>, |L,+1/2>`` with the
photon qubit first. ``|R>`` and ``|-3/2>`` are the +1 eigenstates of sigma_z.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SX, SY, SZ)
PAULI_LABELS = ("I", "x", "y", "z")
AXIS_INDEX = {"x": 1, "y": 2, "z": 3}

# sigma_i (x) sigma_j for i, j in {I, x, y, z}; shape (4, 4, 4, 4)
PAULI_PRODUCTS = np.array([[np.kron(a, b) for b in PAULIS] for a in PAULIS])


class StateError(ValueError):
    """Raised for out-of-domain arguments or states violating invariants."""


def projector(axis: str, sign: int) -> np.ndarray:
    """Single-qubit projector onto the ``sign`` eigenstate of the Pauli ``axis``."""
    if axis not in AXIS_INDEX or sign not in (1, -1):
        raise StateError(f"bad projector {sign:+d}{axis}")
    return 0.5 * (I2 + sign * PAULIS[AXIS_INDEX[axis]])


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size not in (2, 4):
            raise StateError(f"state dimension must be 2 or 4, got {amps.size}")
        if abs(np.vdot(amps, amps).real - 1.0) > 1e-12:
            raise StateError("state vector is not normalized")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator (dim 2 or 4).

    Construction validates all invariants. Use :func:`as_physical` to repair
    round-off before wrapping a numerically produced matrix.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 4):
            raise StateError(f"density matrix must be 2x2 or 4x4, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise StateError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise StateError(f"density matrix trace {np.trace(m).real:.3e} != 1")
        if np.linalg.eigvalsh(m).min() < -POSITIVITY_TOL:
            raise StateError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, psi: StateVector) -> "DensityMatrix":
        return cls(psi.projector())

    @classmethod
    def maximally_mixed(cls, dim: int = 4) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues with round-off negatives clipped to zero."""
        w = np.linalg.eigvalsh(self.matrix)
        return np.where(w < 0, 0.0, w)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.matrix.real.tolist(),
            "im": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DensityMatrix":
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
        m = re + 1j * im
        if m.shape != (obj["dim"], obj["dim"]):
            raise StateError(f"shape {m.shape} does not match dim {obj['dim']}")
        return cls(m)


def as_physical(m: np.ndarray) -> DensityMatrix:
    """Symmetrize, clip tiny negative eigenvalues and renormalize."""
    m = np.asarray(m, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if w.min() < -POSITIVITY_TOL * max(1.0, abs(w).max()) * 1e3:
        raise StateError(f"matrix is not positive (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    m = (v * w) @ v.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


def ideal_state(weight_R: float, phase: float = 0.0) -> StateVector:
    """sqrt(w)|R,-3/2> + exp(i phase) sqrt(1-w)|L,+1/2>."""
    if not 0.0 <= weight_R <= 1.0:
        raise StateError(f"weight_R must lie in [0, 1], got {weight_R}")
    amps = np.zeros(4, dtype=complex)
    amps[0] = np.sqrt(weight_R)
    amps[3] = np.exp(1j * phase) * np.sqrt(1.0 - weight_R)
    return StateVector(amps)


def bell_state(phase: float = 0.0) -> StateVector:
    return ideal_state(0.5, phase)


def fidelity(rho: DensityMatrix, psi: StateVector) -> float:
    """Overlap <psi|rho|psi>."""
    if rho.dim != psi.dim:
        raise StateError(f"dimension mismatch: rho {rho.dim}, psi {psi.dim}")
    value = np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)
    return float(min(max(value.real, 0.0), 1.0))


def purity(rho: DensityMatrix) -> float:
    w = rho.eigenvalues()
    return float(np.sum(w**2) / np.sum(w) ** 2)


def max_fidelity_for_purity(P: float) -> float:
    """Largest overlap with a pure target for a rank-2 state of purity ``P``.

    The closed form is exact when the state has at most two non-zero
    eigenvalues. States spreading their weight over more eigenvectors can
    exceed it slightly.
    """
    if not 0.5 <= P <= 1.0 + 1e-12:
        raise StateError(f"bound defined only for 0.5 <= P <= 1, got {P}")
    return 0.5 * (1.0 + np.sqrt(max(2.0 * P - 1.0, 0.0)))


def bell_fidelity(rho: DensityMatrix) -> tuple[float, float]:
    """Overlap with (|R,-3/2> + e^{i phi}|L,+1/2>)/sqrt(2), maximized over phi.

    Returns ``(fidelity, phi)``.
    """
    if rho.dim != 4:
        raise StateError("Bell overlap needs a two-qubit state")
    m = rho.matrix
    coherence = m[3, 0]
    phi = float(np.angle(coherence)) if abs(coherence) > 0 else 0.0
    value = 0.5 * (m[0, 0].real + m[3, 3].real) + abs(coherence)
    return float(min(max(value, 0.0), 1.0)), phi


@dataclass
class PauliTable:
    """Joint expectation values S[i, j] = <sigma_i (x) sigma_j>.

    Index order is (I, x, y, z); photon index first. ``variance`` holds the
    per-entry variance when the table was estimated from counts.
    """

    S: np.ndarray
    variance: np.ndarray | None = None
    flags: dict | None = None

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float).reshape(4, 4)
        if self.variance is not None:
            self.variance = np.asarray(self.variance, dtype=float).reshape(4, 4)


def pauli_expand(rho: DensityMatrix) -> PauliTable:
    if rho.dim != 4:
        raise StateError("Pauli expansion needs a two-qubit state")
    S = np.einsum("ijab,ba->ij", PAULI_PRODUCTS, rho.matrix).real
    return PauliTable(S)


def pauli_matrix(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pauli_expand` on raw arrays: (1/4) sum S_ij s_i(x)s_j."""
    return 0.25 * np.einsum("ij,ijab->ab", np.asarray(S, dtype=float), PAULI_PRODUCTS)


def partial_trace_photon(m: np.ndarray) -> np.ndarray:
    return np.einsum("aiaj->ij", np.asarray(m).reshape(2, 2, 2, 2))


def trace_distance(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    a = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    b = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    return float(0.5 * np.abs(np.linalg.eigvalsh(a - b)).sum())


def werner_state(psi: StateVector, p: float) -> DensityMatrix:
    """(1 - p)|psi><psi| + p I/d."""
    if not 0.0 <= p <= 1.0:
        raise StateError(f"depolarization must lie in [0, 1], got {p}")
    d = psi.dim
    return as_physical((1.0 - p) * psi.projector() + p * np.eye(d) / d)


def werner_p_for_purity(P: float, dim: int = 4) -> float:
    """Depolarization p giving a Werner state of purity ``P``.

    Purity is quadratic in p: 1 - 2p(1 - 1/d) + p^2 (1 - 1/d).
    """
    c = 1.0 - 1.0 / dim
    if not 1.0 / dim <= P <= 1.0:
        raise StateError(f"purity {P} outside [1/{dim}, 1]")
    return float(1.0 - np.sqrt(1.0 - (1.0 - P) / c))


def werner_p_for_fidelity(F: float, dim: int = 4) -> float:
    """Depolarization p giving overlap ``F`` with the pure component."""
    return float((1.0 - F) / (1.0 - 1.0 / dim))


def random_density_matrix(rng: np.random.Generator, dim: int = 4, rank: int | None = None) -> DensityMatrix:
    """Ginibre-distributed random state of the given rank (full rank by default)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return as_physical(m / np.trace(m).real)


def random_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def basis_labels() -> list[str]:
    return [f"{p}{i}" for p, i in product(("R", "L"), ("-3/2", "+1/2"))]
