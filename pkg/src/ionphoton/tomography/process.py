"""Single-qubit process tomography of the converter from four probe states.

Polarization frame: H = |0> (+z), V = |1>, D = (H + V)/sqrt 2 (+x) and
L = (H + iV)/sqrt 2 (+y). Stokes vectors are stored in Pauli order
``(<sigma_x>, <sigma_y>, <sigma_z>)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..quantum import I2, PAULIS, SX, SY, SZ, StateVector

_PAULI_OPS = np.array(PAULIS)


class ProcessTomographyError(ValueError):
    pass


@dataclass(frozen=True)
class StokesVector:
    """Normalized Stokes vector with optional photon number per component."""

    s: tuple[float, float, float]
    n: float | None = None

    def __post_init__(self):
        s = tuple(float(v) for v in np.asarray(self.s, dtype=float).reshape(3))
        object.__setattr__(self, "s", s)
        if np.linalg.norm(s) > 1 + 1e-9:
            raise ProcessTomographyError(f"Stokes vector {s} has norm above 1")

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.s)

    @property
    def variance(self) -> np.ndarray:
        """Binomial variance of each component estimated from ``n`` photons."""
        if not self.n:
            return np.zeros(3)
        return (1.0 - self.vector**2) / self.n

    def density_matrix(self) -> np.ndarray:
        x, y, z = self.s
        return 0.5 * (I2 + x * SX + y * SY + z * SZ)

    @classmethod
    def from_state(cls, rho: np.ndarray | StateVector, n: float | None = None) -> "StokesVector":
        m = rho.projector() if isinstance(rho, StateVector) else np.asarray(rho)
        return cls(tuple(np.trace(p @ m).real for p in (SX, SY, SZ)), n)


def probe_states() -> dict[str, StateVector]:
    r = 1 / np.sqrt(2)
    return {
        "H": StateVector(np.array([1, 0], dtype=complex)),
        "V": StateVector(np.array([0, 1], dtype=complex)),
        "D": StateVector(np.array([r, r], dtype=complex)),
        "L": StateVector(np.array([r, 1j * r], dtype=complex)),
    }


# B[(i, j), (m, n)] = Tr(s_i s_m s_j s_n) / 2 maps chi to the Pauli transfer matrix
_B = 0.5 * np.einsum("iab,mbc,jcd,nda->ijmn", _PAULI_OPS, _PAULI_OPS, _PAULI_OPS, _PAULI_OPS).reshape(16, 16)


@dataclass
class ProcessMatrix:
    """chi in the Pauli basis {1, sx, sy, sz}: E(rho) = sum chi_mn s_m rho s_n."""

    chi: np.ndarray
    ptm: np.ndarray | None = None
    fidelity_sigma: float = 0.0
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.chi = np.asarray(self.chi, dtype=complex)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_chi(self.chi, rho)

    def to_json(self) -> dict:
        return {
            "chi_re": self.chi.real.tolist(),
            "chi_im": self.chi.imag.tolist(),
            "process_fidelity": float(self.chi[0, 0].real),
            "process_fidelity_sigma": self.fidelity_sigma,
            "ptm": None if self.ptm is None else self.ptm.tolist(),
            "flags": list(self.flags),
        }


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("mn,mab,bc,ncd->ad", chi, _PAULI_OPS, rho, _PAULI_OPS)


def ptm_to_chi(ptm: np.ndarray) -> np.ndarray:
    chi = np.linalg.solve(_B, np.asarray(ptm, dtype=complex).reshape(16)).reshape(4, 4)
    return 0.5 * (chi + chi.conj().T)


def chi_to_ptm(chi: np.ndarray) -> np.ndarray:
    return (_B @ np.asarray(chi).reshape(16)).reshape(4, 4).real


def chi_from_unitary(u: np.ndarray) -> np.ndarray:
    """chi = c c^dag with u = sum_m c_m sigma_m."""
    c = np.einsum("mab,ba->m", _PAULI_OPS, u) / 2
    return np.outer(c, c.conj())


def depolarizing_chi(p: float) -> np.ndarray:
    return np.diag([1 - 3 * p / 4, p / 4, p / 4, p / 4]).astype(complex)


def _bloch(state: StateVector) -> np.ndarray:
    m = state.projector()
    return np.array([np.trace(p @ m).real for p in (SX, SY, SZ)])


def _ptm_from_stokes(inputs: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    """Least-squares affine Bloch map r_out = M r_in + c, as a 4x4 transfer matrix."""
    X = np.column_stack([np.ones(len(inputs)), inputs])
    coef = np.linalg.lstsq(X, outputs, rcond=None)[0]
    ptm = np.zeros((4, 4))
    ptm[0, 0] = 1.0
    ptm[1:, 0] = coef[0]
    ptm[1:, 1:] = coef[1:].T
    return ptm


def process_tomography(probe_inputs, output_stokes) -> ProcessMatrix:
    """chi from the four probe inputs and the measured output Stokes vectors.

    The affine Bloch map is solved by linear least squares, converted to the
    Pauli transfer matrix and then to chi (Hermitized, positivity not
    enforced). When the Stokes vectors carry photon numbers, the 1-sigma
    error of the process fidelity follows by linear propagation.
    """
    inputs = list(probe_inputs.values()) if isinstance(probe_inputs, dict) else list(probe_inputs)
    outputs = list(output_stokes.values()) if isinstance(output_stokes, dict) else list(output_stokes)
    if len(inputs) != len(outputs):
        raise ProcessTomographyError("need one output Stokes vector per probe")
    r_in = np.array([_bloch(s) for s in inputs])
    X = np.column_stack([np.ones(len(r_in)), r_in])
    if len(inputs) < 4 or np.linalg.matrix_rank(X, tol=1e-9) < 4:
        raise ProcessTomographyError("probe set is not informationally complete")
    r_out = np.array([o.vector for o in outputs])
    ptm = _ptm_from_stokes(r_in, r_out)
    chi = ptm_to_chi(ptm)

    # chi_00 = (1 + tr M) / 4 is linear in the outputs; propagate component variances
    var = np.array([o.variance for o in outputs])
    sigma = 0.0
    if var.any():
        pinv = np.linalg.pinv(X)
        # d tr(M) / d r_out[k, i] = pinv[1 + i, k]
        grad = 0.25 * pinv[1:, :].T
        sigma = float(np.sqrt(np.sum(grad**2 * var)))
    flags = []
    if np.linalg.eigvalsh(chi).min() < -1e-9:
        flags.append("chi has negative eigenvalues")
    return ProcessMatrix(chi=chi, ptm=ptm, fidelity_sigma=sigma, flags=flags)


def process_fidelity(chi: ProcessMatrix | np.ndarray) -> tuple[float, float]:
    """Process fidelity Re(chi_00) and its 1-sigma error."""
    if isinstance(chi, ProcessMatrix):
        return float(chi.chi[0, 0].real), chi.fidelity_sigma
    return float(np.asarray(chi)[0, 0].real), 0.0
