"""Photon detection-time distributions.

A wavepacket starts at ``onset`` and is truncated ``span`` seconds later. The
analysis only needs bin integrals of the envelope and of the envelope times a
Larmor phasor, so shapes expose those directly.
"""

from __future__ import annotations

import numpy as np


class WavepacketError(ValueError):
    pass


def tau_for_fraction(window: float, fraction: float) -> float:
    """Decay constant tau with 1 - exp(-window/tau) = fraction."""
    if not 0.0 < fraction < 1.0:
        raise WavepacketError(f"window fraction must lie strictly in (0, 1), got {fraction}")
    if window <= 0:
        raise WavepacketError("window must be positive")
    return -window / np.log1p(-fraction)


class Wavepacket:
    """Base class; subclasses provide ``pdf``, ``cdf`` and ``ppf``.

    Bin integrals fall back to Gauss-Legendre quadrature.
    """

    onset: float
    span: float

    def pdf(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def ppf(self, q):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.ppf(rng.random(n))

    def bin_weights(self, edges: np.ndarray) -> np.ndarray:
        c = self.cdf(np.asarray(edges, dtype=float))
        return np.diff(c)

    def bin_phasors(self, edges: np.ndarray, omega: float, t_ref: float) -> np.ndarray:
        """Integral of pdf(t) * exp(i omega (t - t_ref)) over each bin."""
        edges = np.asarray(edges, dtype=float)
        x, w = np.polynomial.legendre.leggauss(24)
        a, b = edges[:-1, None], edges[1:, None]
        t = 0.5 * (b - a) * x + 0.5 * (b + a)
        vals = self.pdf(t) * np.exp(1j * omega * (t - t_ref))
        return (0.5 * (b - a) * vals * w).sum(axis=1)


class ExponentialWavepacket(Wavepacket):
    """exp(-(t - onset)/tau) on [onset, onset + span], normalized."""

    def __init__(self, tau: float, onset: float = 0.0, span: float = 2e-6):
        if tau <= 0 or span <= 0:
            raise WavepacketError("tau and span must be positive")
        self.tau = float(tau)
        self.onset = float(onset)
        self.span = float(span)
        self._norm = -np.expm1(-self.span / self.tau)

    def pdf(self, t):
        u = np.asarray(t, dtype=float) - self.onset
        inside = (u >= 0) & (u <= self.span)
        return np.where(inside, np.exp(-np.clip(u, 0, None) / self.tau) / (self.tau * self._norm), 0.0)

    def cdf(self, t):
        u = np.clip(np.asarray(t, dtype=float) - self.onset, 0.0, self.span)
        return -np.expm1(-u / self.tau) / self._norm

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        return self.onset - self.tau * np.log1p(-q * self._norm)

    def bin_phasors(self, edges, omega, t_ref):
        edges = np.asarray(edges, dtype=float)
        u = np.clip(edges - self.onset, 0.0, self.span)
        kappa = -1.0 / self.tau + 1j * omega
        prim = np.exp(kappa * u) / kappa
        pref = np.exp(1j * omega * (self.onset - t_ref)) / (self.tau * self._norm)
        return pref * np.diff(prim)

    def window_fraction(self, window: float) -> float:
        return float(self.cdf(self.onset + window))


def wavepacket_sampler(config) -> ExponentialWavepacket:
    """Default wavepacket for an :class:`~ionphoton.config.ExperimentConfig`."""
    tau = tau_for_fraction(config.window, config.wavepacket_window_fraction)
    return ExponentialWavepacket(tau, onset=config.window_start, span=config.wavepacket_span)
