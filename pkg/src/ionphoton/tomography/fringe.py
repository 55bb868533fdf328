"""Larmor fringe fits of superposition-basis coincidence histograms.

Model for the counts in window bin k::

    mu_k = a0 * E_k + a1 * Re(Z_k) + a2 * Im(Z_k) + offset

where E_k is the bin integral of the wavepacket envelope and Z_k the bin
integral of envelope * exp(i omega (t - t_ref)). In amplitude form this is
``A * envelope * (1 + V cos(omega (t - t_ref) + phi))`` with ``A = a0``,
``V = |a1 - i a2| / a0`` and ``phi = atan2(-a2, a1)``. The offset is fixed to
the mean of the bins before the wavepacket onset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from ..wavepacket import Wavepacket
from .histograms import CoincidenceHistogram

MIN_POPULATED_BINS = 6
UNPHYSICAL_VISIBILITY = 1.05
PHASE_SIGNIFICANCE = 3.0


class FringeFitError(RuntimeError):
    pass


class InsufficientDataError(FringeFitError):
    pass


@dataclass
class FringeFit:
    amplitude: float
    visibility: float
    phase: float
    larmor_frequency: float
    offset: float
    coefficients: np.ndarray
    covariance: np.ndarray
    sigma_visibility: float
    sigma_phase: float
    chi2: float
    dof: int
    flags: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return "unphysical" not in self.flags


def _design(h: CoincidenceHistogram, wp: Wavepacket, omega: float, t_ref: float, mask: np.ndarray) -> np.ndarray:
    e = wp.bin_weights(h.edges)[mask]
    z = wp.bin_phasors(h.edges, omega, t_ref)[mask]
    return np.column_stack([e, z.real, z.imag])


def _amplitude_form(a: np.ndarray, cov: np.ndarray):
    a0, a1, a2 = a
    r = np.hypot(a1, a2)
    V = r / a0 if a0 > 0 else np.inf
    phi = float(np.arctan2(-a2, a1))
    # gradients of V and phi with respect to (a0, a1, a2)
    if r > 0 and a0 > 0:
        gV = np.array([-r / a0**2, a1 / (r * a0), a2 / (r * a0)])
        gphi = np.array([0.0, a2 / r**2, -a1 / r**2])
        sV = float(np.sqrt(max(gV @ cov @ gV, 0.0)))
        sphi = float(np.sqrt(max(gphi @ cov @ gphi, 0.0)))
    else:
        sV, sphi = np.inf, np.inf
    return float(a0), float(V), phi, sV, sphi


def fit_larmor_fringe(
    histogram: CoincidenceHistogram,
    larmor_frequency_guess: float,
    wavepacket: Wavepacket,
    fit_frequency: bool = True,
    t_ref: float | None = None,
    irls_iterations: int = 4,
) -> FringeFit:
    """Weighted least-squares fit of a Larmor fringe inside the analysis window.

    With ``fit_frequency=False`` the problem is linear in the coefficients and
    solved by iteratively reweighted least squares with model-based Poisson
    variances. Otherwise the frequency is refined afterwards by a nonlinear
    fit started from the linear solution.
    """
    h = histogram
    t_ref = h.window_start if t_ref is None else t_ref
    mask = h.window_mask()
    y_all = h.counts
    if np.count_nonzero(y_all[mask] != 0) < MIN_POPULATED_BINS:
        raise InsufficientDataError(f"{h.setting.label}: fewer than {MIN_POPULATED_BINS} populated bins")
    periods = (h.window_end - h.window_start) * larmor_frequency_guess / (2 * np.pi)
    if periods < 2 - 1e-9:
        raise InsufficientDataError(f"{h.setting.label}: window spans only {periods:.2f} fringe periods")

    bg = h.background_mask()
    offset = float(y_all[bg].mean()) if bg.any() else 0.0
    y = y_all[mask] - offset
    # extra variance of corrected data beyond the Poisson variance of the model
    extra = np.clip(h.var[mask] - y_all[mask], 0.0, None)

    omega = float(larmor_frequency_guess)
    X = _design(h, wavepacket, omega, t_ref, mask)
    var = np.clip(h.var[mask], 0.0, None)
    floor = 1e-6 * max(float(np.mean(np.abs(y_all[mask]))), 1e-300)
    var = np.maximum(var, max(floor, 1e-3 * var.mean()) if var.mean() > 0 else 1.0)
    for _ in range(irls_iterations):
        w = 1.0 / var
        a = np.linalg.lstsq(X * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
        mu = X @ a
        var = np.maximum(mu + offset + extra, floor)

    w = 1.0 / var
    if fit_frequency:
        sw = np.sqrt(w)

        def resid(p):
            Xp = _design(h, wavepacket, p[3], t_ref, mask)
            return (y - Xp @ p[:3]) * sw

        scale = np.array([max(abs(a[0]), 1.0)] * 3 + [omega])
        sol = least_squares(resid, np.append(a, omega), x_scale=scale, method="lm", xtol=1e-12, ftol=1e-12)
        if not sol.success:
            raise FringeFitError(f"{h.setting.label}: frequency fit did not converge ({sol.message})")
        a, omega = sol.x[:3], float(sol.x[3])
        J = sol.jac
        X = _design(h, wavepacket, omega, t_ref, mask)
        try:
            cov_full = np.linalg.inv(J.T @ J)
        except np.linalg.LinAlgError:
            cov_full = np.linalg.pinv(J.T @ J)
        cov = cov_full[:3, :3]
    else:
        F = X.T @ (X * w[:, None])
        try:
            cov = np.linalg.inv(F)
        except np.linalg.LinAlgError:
            cov = np.linalg.pinv(F)

    r = y - X @ a
    chi2 = float(np.sum(r**2 * w))
    dof = int(mask.sum() - (4 if fit_frequency else 3))
    A, V, phi, sV, sphi = _amplitude_form(a, cov)
    flags = []
    if V > UNPHYSICAL_VISIBILITY:
        flags.append("unphysical")
    # for zero true visibility V/sV is Rayleigh distributed; 3 sigma leaves ~1% false positives
    if not V > PHASE_SIGNIFICANCE * sV:
        flags.append("phase_undetermined")
    return FringeFit(
        amplitude=A,
        visibility=V,
        phase=phi,
        larmor_frequency=omega,
        offset=offset,
        coefficients=np.asarray(a, dtype=float),
        covariance=cov,
        sigma_visibility=sV,
        sigma_phase=sphi,
        chi2=chi2,
        dof=dof,
        flags=flags,
    )
