"""Rate, background and signal-to-background budgets of an experiment config."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import ExperimentConfig, Measured
from ..simulation.simulate import detection_probability_chain
from .chain import BudgetError


def sbr(signal_events: float, background_events: float) -> float:
    """Signal over background; ``inf`` when there is no background."""
    if background_events < 0 or signal_events < 0:
        raise BudgetError("event counts must be non-negative")
    if background_events == 0:
        return math.inf
    return signal_events / background_events


def _acceptance(config: ExperimentConfig) -> float:
    """Dark-coincidence acceptance per repetition: window * mix * branching."""
    return config.window * config.mixture_fraction_wanted * config.branching_854


def background_budget(config: ExperimentConfig, duration: float | None = None) -> tuple[float, float]:
    """Expected in-window background coincidences and their 1-sigma spread.

    The sigma combines Poisson noise of the expected count with the
    propagated detector-efficiency uncertainty of the conversion-noise term.
    """
    duration = config.acquisition_duration if duration is None else duration
    rates = np.asarray(config.effective_dark_rates())
    k = _acceptance(config) * config.repetition_rate * duration
    value = float(rates.sum() * k)
    noise_sigma = 0.0
    if config.converter is not None:
        share = config.converter.conversion_noise_rate / config.n_detectors
        noise_sigma = share * float(np.sum(config.detector_efficiency_sigmas))
    sigma = float(np.hypot(np.sqrt(value), noise_sigma * k))
    return value, sigma


@dataclass
class BudgetReport:
    label: str
    detected_rate: float
    detected_rate_sigma: float
    generated_rate: float
    generated_rate_sigma: float
    theoretical_generated_rate: float
    total_detection_efficiency: float
    total_detection_efficiency_sigma: float
    effective_dark_rates: list[float]
    background_events: float
    background_sigma: float
    signal_events: float
    sbr: float
    chain: dict
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "detected_rate": self.detected_rate,
            "detected_rate_sigma": self.detected_rate_sigma,
            "generated_rate": self.generated_rate,
            "generated_rate_sigma": self.generated_rate_sigma,
            "theoretical_generated_rate": self.theoretical_generated_rate,
            "total_detection_efficiency": self.total_detection_efficiency,
            "total_detection_efficiency_sigma": self.total_detection_efficiency_sigma,
            "effective_dark_rates": list(self.effective_dark_rates),
            "background_events": self.background_events,
            "background_sigma": self.background_sigma,
            "signal_events": self.signal_events,
            "sbr": None if math.isinf(self.sbr) else self.sbr,
            "chain": self.chain,
            "flags": list(self.flags),
        }


def _mean_efficiency_rel_sigma(config: ExperimentConfig) -> float:
    # calibration errors of the detectors are treated as fully correlated
    return float(np.mean(config.detector_efficiency_sigmas)) / config.mean_detector_efficiency


def rate_budget(config: ExperimentConfig, measured: Measured | None = None, n_sigma: float = 3.0) -> BudgetReport:
    """Detected, inferred-generated and theoretical rates plus SBR.

    Without ``measured`` counts the detected rate and signal are the
    predictions of the detection chain.
    """
    chain = detection_probability_chain(config)
    measured = measured if measured is not None else config.measured
    det_eff = config.analyzer_transmission * config.projection_acceptance * config.mean_detector_efficiency
    if det_eff <= 0:
        raise BudgetError("detection efficiency is zero")
    rel_det = _mean_efficiency_rel_sigma(config)
    bg, bg_sigma = background_budget(config, measured.duration if measured else None)

    if measured is not None:
        if measured.duration <= 0:
            raise BudgetError("measured duration must be positive")
        gamma_det = measured.signal_events / measured.duration
        gamma_det_sigma = math.sqrt(measured.signal_events) / measured.duration
        signal = float(measured.signal_events)
        background = float(measured.background_events) if measured.background_events is not None else bg
    else:
        gamma_det = chain.detected_rate
        gamma_det_sigma = 0.0
        signal = gamma_det * config.acquisition_duration
        background = bg

    gamma_gen = gamma_det / det_eff
    gamma_gen_sigma = gamma_gen * math.hypot(gamma_det_sigma / gamma_det if gamma_det else 0.0, rel_det)

    trans = config.converter.transmission if config.converter is not None else 1.0
    tot = trans * config.analyzer_transmission * config.mean_detector_efficiency
    rel_tot = rel_det
    if config.converter is not None:
        rel_tot = math.hypot(rel_det, config.converter.external_efficiency_sigma / config.converter.external_efficiency)

    flags = []
    theo = chain.generated_rate
    if measured is not None and gamma_gen_sigma > 0 and abs(gamma_gen - theo) > n_sigma * gamma_gen_sigma:
        flags.append(f"generated rate {gamma_gen:.2f} disagrees with prediction {theo:.2f} beyond {n_sigma:g} sigma")
    ratio = sbr(signal, background)
    if math.isinf(ratio):
        flags.append("infinite SBR: no background")

    return BudgetReport(
        label=config.label,
        detected_rate=gamma_det,
        detected_rate_sigma=gamma_det_sigma,
        generated_rate=gamma_gen,
        generated_rate_sigma=gamma_gen_sigma,
        theoretical_generated_rate=theo,
        total_detection_efficiency=tot,
        total_detection_efficiency_sigma=tot * rel_tot,
        effective_dark_rates=[float(r) for r in config.effective_dark_rates()],
        background_events=bg,
        background_sigma=bg_sigma,
        signal_events=signal,
        sbr=ratio,
        chain=chain.to_json(),
        flags=flags,
    )


def compare(reference: BudgetReport, other: BudgetReport) -> dict:
    """Detection-efficiency ratio and the implied background reduction factor.

    The background reduction is the factor by which background must fall for
    the SBR to change as observed given the signal efficiency ratio.
    """
    ratio = other.total_detection_efficiency / reference.total_detection_efficiency
    rel = math.hypot(
        other.total_detection_efficiency_sigma / other.total_detection_efficiency,
        reference.total_detection_efficiency_sigma / reference.total_detection_efficiency,
    )
    sbr_change = other.sbr / reference.sbr
    return {
        "reference": reference.label,
        "other": other.label,
        "efficiency_ratio": ratio,
        "efficiency_ratio_sigma": ratio * rel,
        "sbr_ratio": sbr_change,
        "background_reduction": ratio / sbr_change,
    }
