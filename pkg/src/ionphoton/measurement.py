"""Time-resolved joint projection model.

The ion's superposition phase precesses at the Larmor frequency, so an x or y
analysis performed at a fixed delay measures an axis rotated by
``theta = omega_L * (t - t_ref)``, where ``t`` is the photon detection time
and ``t_ref`` the wavepacket onset. With ``n(theta) = (cos theta, sin theta)``
in the equatorial plane:

* ion axis x measures ``cos(theta) sigma_x + sin(theta) sigma_y``
* ion axis y measures ``cos(theta) sigma_y - sin(theta) sigma_x``
* ion axis z is unaffected.
"""

from __future__ import annotations

import numpy as np

from .quantum import I2, SX, SY, projector

# (in-phase operator, quadrature operator) of each equatorial analysis axis
QUADRATURES = {"x": (SX, SY), "y": (SY, -SX)}


def quadrature_indices(axis: str) -> tuple[tuple[int, float], tuple[int, float]]:
    """Pauli index and sign of the in-phase and quadrature operators."""
    return {"x": ((1, 1.0), (2, 1.0)), "y": ((2, 1.0), (1, -1.0))}[axis]


def setting_probability(rho: np.ndarray, setting, theta) -> np.ndarray:
    """Tr[(P_photon (x) P_ion(theta)) rho] for an array of Larmor angles."""
    theta = np.asarray(theta, dtype=float)
    p_ph = projector(setting.photon_axis, setting.photon_sign)
    if setting.ion_axis == "z":
        val = np.trace(np.kron(p_ph, projector("z", setting.ion_sign)) @ rho).real
        return np.full(theta.shape, val)
    a, b = QUADRATURES[setting.ion_axis]
    base = 0.5 * np.trace(np.kron(p_ph, I2) @ rho).real
    ca = np.trace(np.kron(p_ph, a) @ rho).real
    cb = np.trace(np.kron(p_ph, b) @ rho).real
    return base + 0.5 * setting.ion_sign * (np.cos(theta) * ca + np.sin(theta) * cb)


def binned_operators(setting, weights: np.ndarray, phasors: np.ndarray) -> np.ndarray:
    """Effective measurement operators of each time bin.

    ``weights`` are bin integrals of the wavepacket envelope and ``phasors``
    the bin integrals of envelope * exp(i theta). The expected count in bin
    ``k`` is proportional to Tr[O_k rho].
    """
    weights = np.asarray(weights, dtype=float)
    p_ph = projector(setting.photon_axis, setting.photon_sign)
    if setting.ion_axis == "z":
        op = np.kron(p_ph, projector("z", setting.ion_sign))
        return weights[:, None, None] * op[None]
    a, b = QUADRATURES[setting.ion_axis]
    ion = (
        0.5 * weights[:, None, None] * I2[None]
        + 0.5 * setting.ion_sign * (phasors.real[:, None, None] * a[None] + phasors.imag[:, None, None] * b[None])
    )
    return np.einsum("ij,kab->kiajb", p_ph, ion).reshape(-1, 4, 4)


def static_operator(setting) -> np.ndarray:
    return np.kron(projector(setting.photon_axis, setting.photon_sign), projector(setting.ion_axis, setting.ion_sign))

