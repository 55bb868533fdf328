"""Ground-truth states and the converter's single-qubit polarization channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ConverterConfig, ExperimentConfig, ProcessChannel
from ..quantum import (
    I2,
    DensityMatrix,
    StateVector,
    as_physical,
    bell_fidelity,
    fidelity,
    ideal_state,
    partial_trace_photon,
    purity,
    werner_state,
)


def _channel_of(channel: ConverterConfig | ProcessChannel | None) -> ProcessChannel:
    if channel is None:
        return ProcessChannel()
    if isinstance(channel, ConverterConfig):
        return channel.process_channel
    return channel


def photon_channel_kraus(channel: ProcessChannel) -> tuple[np.ndarray, float]:
    """Filter-and-phase operator and depolarization strength of the channel.

    The filter attenuates the |0> arm amplitude by sqrt(1 - arm_imbalance);
    the residual phase is applied to the |1> arm.
    """
    k = np.diag([np.sqrt(1.0 - channel.arm_imbalance), np.exp(1j * channel.residual_phase)])
    return k, channel.depolarization_p


def apply_qubit_channel(rho: np.ndarray, channel: ProcessChannel) -> np.ndarray:
    """Apply the channel to a single-qubit density matrix, renormalizing losses."""
    k, p = photon_channel_kraus(channel)
    out = k @ rho @ k.conj().T
    out = out / np.trace(out).real
    return (1.0 - p) * out + p * np.trace(out) * I2 / 2


def apply_converter_channel(rho: DensityMatrix, channel: ConverterConfig | ProcessChannel | None) -> DensityMatrix:
    """Apply the converter channel to the photon half of a two-qubit state."""
    ch = _channel_of(channel)
    k, p = photon_channel_kraus(ch)
    K = np.kron(k, I2)
    m = K @ rho.matrix @ K.conj().T
    m = m / np.trace(m).real
    if p:
        m = (1.0 - p) * m + p * np.kron(I2 / 2, partial_trace_photon(m))
    return as_physical(m)


def apply_readout_noise(rho: DensityMatrix, infidelity: float) -> DensityMatrix:
    """State equivalent to symmetric bit flips with probability ``infidelity`` on ion outcomes."""
    if not infidelity:
        return rho
    p = 2.0 * infidelity
    m = rho.matrix
    photon = np.einsum("iaja->ij", m.reshape(2, 2, 2, 2))
    return as_physical((1.0 - p) * m + p * np.kron(photon, I2 / 2))


@dataclass(frozen=True)
class TrueState:
    """Ground truth for closed-loop tests.

    ``rho_state`` is the physical ion-photon state after the converter;
    ``rho_true`` additionally folds in readout errors, i.e. the state the
    tomography should recover.
    """

    rho_state: DensityMatrix
    rho_true: DensityMatrix
    target: StateVector
    weight_R: float

    def figures_of_merit(self) -> dict:
        fb, phi = bell_fidelity(self.rho_true)
        return {
            "fidelity": fidelity(self.rho_true, self.target),
            "bell_fidelity": fb,
            "bell_phase": phi,
            "purity": purity(self.rho_true),
        }


def build_true_state(config: ExperimentConfig) -> TrueState:
    w = 0.5 if config.carving else config.cgc_weight_R
    target = ideal_state(w, 0.0)
    rho = werner_state(target, config.depolarization_p)
    if config.converter is not None:
        rho = apply_converter_channel(rho, config.converter)
    return TrueState(
        rho_state=rho,
        rho_true=apply_readout_noise(rho, config.readout_infidelity),
        target=target,
        weight_R=w,
    )


def simulate_probe_stokes(
    channel: ConverterConfig | ProcessChannel | None,
    counts: int,
    rng: np.random.Generator,
    probes: dict | None = None,
) -> dict:
    """Measured output Stokes vectors of the probe states sent through the channel.

    Each Stokes component is estimated from ``counts`` photons split
    binomially between the two outcomes of its analyzer.
    """
    from ..tomography.process import StokesVector, probe_states

    ch = _channel_of(channel)
    probes = probes or probe_states()
    out = {}
    for name, psi in probes.items():
        exact = StokesVector.from_state(apply_qubit_channel(psi.projector(), ch)).vector
        k = rng.binomial(counts, np.clip((1.0 + exact) / 2.0, 0.0, 1.0))
        s = 2.0 * k / counts - 1.0
        norm = np.linalg.norm(s)
        if norm > 1.0:
            s = s / norm
        out[name] = StokesVector(tuple(s), counts)
    return out
