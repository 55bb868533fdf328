"""Monte-Carlo generation of 36-setting coincidence histograms.

Each setting draws from its own Philox stream keyed by ``(seed, setting
index)``, so settings can be generated in any order or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ExperimentConfig
from ..measurement import binned_operators, setting_probability
from ..tomography.histograms import BasisSetting, CoincidenceHistogram, all_settings
from ..wavepacket import Wavepacket, wavepacket_sampler
from .channel import TrueState, build_true_state


@dataclass
class DetectionChain:
    """Named multiplicative factors of the per-attempt detection probability.

    ``generation`` factors lead to a photon inside the analysis window;
    ``detection`` factors describe the analyzer and detectors.
    """

    generation: list[tuple[str, float]]
    detection: list[tuple[str, float]]
    repetition_rate: float

    @property
    def generated_probability(self) -> float:
        return float(np.prod([v for _, v in self.generation]))

    @property
    def detected_probability(self) -> float:
        return self.generated_probability * float(np.prod([v for _, v in self.detection]))

    @property
    def generated_rate(self) -> float:
        return self.repetition_rate * self.generated_probability

    @property
    def detected_rate(self) -> float:
        return self.repetition_rate * self.detected_probability

    def factor(self, name: str) -> float:
        return dict(self.generation + self.detection)[name]

    def to_json(self) -> dict:
        return {
            "repetition_rate": self.repetition_rate,
            "generation": [{"name": n, "value": v} for n, v in self.generation],
            "detection": [{"name": n, "value": v} for n, v in self.detection],
            "generated_probability": self.generated_probability,
            "detected_probability": self.detected_probability,
            "generated_rate": self.generated_rate,
            "detected_rate": self.detected_rate,
        }


def carving_survival(config: ExperimentConfig) -> float:
    """Photon survival when the |R> arm efficiency is halved."""
    if not config.carving:
        return 1.0
    w = config.cgc_weight_R
    return 0.5 * w + (1.0 - w)


def detection_probability_chain(config: ExperimentConfig) -> DetectionChain:
    gen = [
        ("halo", config.collection_halo),
        ("fiber", config.fiber_coupling),
        ("mix", config.mixture_fraction_wanted),
        ("branching_854", config.branching_854),
        ("wavepacket_window", config.wavepacket_window_fraction),
    ]
    if config.converter is not None:
        gen.append(("converter_transmission", config.converter.transmission))
    if config.carving:
        gen.append(("carving", carving_survival(config)))
    det = [
        ("analyzer", config.analyzer_transmission),
        ("projection", config.projection_acceptance),
        ("detector", config.mean_detector_efficiency),
    ]
    return DetectionChain(gen, det, config.repetition_rate)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))))


def histogram_edges(config: ExperimentConfig) -> np.ndarray:
    n = int(round(config.histogram_span / config.bin_width))
    return np.arange(n + 1) * config.bin_width


def _dark_rate(config: ExperimentConfig) -> float:
    """Background click rate attributed to one setting (photon sign, ion sign)."""
    # photon sign picks one detector of a pair; ion outcome of a dark click is unbiased
    return 0.5 * float(np.mean(config.effective_dark_rates()))


def _photon_probability(config: ExperimentConfig) -> float:
    """Probability per accepted attempt that a photon reaches the detector."""
    p = config.collection_halo * config.fiber_coupling
    if config.converter is not None:
        p *= config.converter.transmission
    p *= carving_survival(config)
    return p * config.analyzer_transmission * config.mean_detector_efficiency


def simulate_setting(
    config: ExperimentConfig,
    setting: BasisSetting,
    duration: float,
    truth: TrueState,
    index: int,
    seed: int | None = None,
    wavepacket: Wavepacket | None = None,
) -> CoincidenceHistogram:
    rng = _stream(config.rng_seed if seed is None else seed, index)
    wp = wavepacket or wavepacket_sampler(config)
    edges = histogram_edges(config)
    n_rep = int(round(config.repetition_rate * duration))

    n_wanted = rng.binomial(n_rep, config.mixture_fraction_wanted)
    n_accepted = rng.binomial(n_wanted, config.branching_854)
    n_photons = rng.binomial(n_accepted, _photon_probability(config))

    t = wp.sample(rng, n_photons)
    theta = config.larmor_frequency * (t - config.window_start)
    p = setting_probability(truth.rho_state.matrix, setting, theta)
    r = config.readout_infidelity
    if r:
        flipped = BasisSetting(setting.photon_axis, setting.photon_sign, setting.ion_axis, -setting.ion_sign)
        p = (1.0 - r) * p + r * setting_probability(truth.rho_state.matrix, flipped, theta)
    signal = t[rng.random(n_photons) < p]

    n_dark = rng.poisson(n_accepted * _dark_rate(config) * config.histogram_span)
    dark = rng.uniform(0.0, edges[-1], n_dark)

    counts, _ = np.histogram(np.concatenate([signal, dark]), bins=edges)
    return CoincidenceHistogram(
        setting=setting,
        bin_width=config.bin_width,
        counts=counts,
        window_start=config.window_start,
        window_end=config.window_start + config.window,
        duration=duration,
    )


def simulate(
    config: ExperimentConfig,
    settings: list[tuple[BasisSetting, float]] | None = None,
    seed: int | None = None,
    duration_scale: float = 1.0,
    truth: TrueState | None = None,
) -> list[CoincidenceHistogram]:
    """Histograms for every requested setting (default: all 36, equal time each)."""
    truth = truth or build_true_state(config)
    if settings is None:
        settings = [(s, config.setting_duration * duration_scale) for s in all_settings()]
    order = {s: i for i, s in enumerate(all_settings())}
    wp = wavepacket_sampler(config)
    return [
        simulate_setting(config, s, d, truth, order[s], seed=seed, wavepacket=wp)
        for s, d in settings
    ]


def expected_histograms(
    config: ExperimentConfig,
    truth: TrueState | None = None,
    dark: bool = True,
    duration_scale: float = 1.0,
) -> list[CoincidenceHistogram]:
    """Noiseless expected counts per bin (float), in the same layout as :func:`simulate`."""
    truth = truth or build_true_state(config)
    wp = wavepacket_sampler(config)
    edges = histogram_edges(config)
    weights = wp.bin_weights(edges)
    phasors = wp.bin_phasors(edges, config.larmor_frequency, config.window_start)
    duration = config.setting_duration * duration_scale
    n_acc = config.repetition_rate * duration * config.mixture_fraction_wanted * config.branching_854
    scale = n_acc * _photon_probability(config)
    dark_per_bin = n_acc * _dark_rate(config) * config.bin_width if dark else 0.0
    rho = truth.rho_true.matrix
    out = []
    for s in all_settings():
        ops = binned_operators(s, weights, phasors)
        mu = scale * np.einsum("kab,ba->k", ops, rho).real + dark_per_bin
        out.append(
            CoincidenceHistogram(
                setting=s,
                bin_width=config.bin_width,
                counts=mu,
                window_start=config.window_start,
                window_end=config.window_start + config.window,
                duration=duration,
            )
        )
    return out
