"""Experiment configuration: rates, efficiencies, noise and timing parameters.

All quantities are SI (seconds, Hz, rad/s). Configuration files are JSON and
hold either a single experiment object or ``{"experiments": {name: {...}}}``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration. ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        msg = "; ".join(f"{name}: {text}" for name, text in self.errors)
        super().__init__(msg)


@dataclass
class ProcessChannel:
    """Single-qubit channel acting on the photon polarization inside the converter."""

    depolarization_p: float = 0.0
    residual_phase: float = 0.0
    # fractional efficiency reduction of the |0> (R or H) arm
    arm_imbalance: float = 0.0


@dataclass
class ConverterConfig:
    fiber_transmission: float = 0.758
    external_efficiency: float = 0.265
    external_efficiency_sigma: float = 0.002
    stabilization_duty: float = 0.875
    conversion_noise_rate: float = 11.4
    process_channel: ProcessChannel = field(default_factory=ProcessChannel)

    @property
    def transmission(self) -> float:
        return self.fiber_transmission * self.external_efficiency * self.stabilization_duty


@dataclass
class Measured:
    """Observed totals used by the budget (signal/background inside the window)."""

    signal_events: float
    duration: float
    background_events: float | None = None


@dataclass
class ExperimentConfig:
    label: str = "unconverted"
    repetition_rate: float = 58e3
    cgc_weight_R: float = 2.0 / 3.0
    mixture_fraction_wanted: float = 0.5
    branching_854: float = 0.899
    collection_halo: float = 0.036
    fiber_coupling: float = 0.39
    window: float = 300e-9
    wavepacket_window_fraction: float = 0.65
    larmor_frequency: float = 2 * np.pi * 10e6
    depolarization_p: float = 0.0
    readout_infidelity: float = 0.0
    # polarization analyzer transmission (polarizer optics or telecom tomography setup)
    analyzer_transmission: float = 0.78
    detector_efficiencies: list[float] = field(default_factory=lambda: [0.30])
    detector_efficiency_sigmas: list[float] = field(default_factory=lambda: [0.0])
    dark_count_rates: list[float] = field(default_factory=lambda: [117.7])
    converter: ConverterConfig | None = None
    carving: bool = False
    acquisition_duration: float = 4132.0
    rng_seed: int = 0
    bin_width: float = 10e-9
    # photon-free region before the wavepacket onset used for dark-count estimation
    background_span: float = 2e-6
    # sampled wavepacket span after onset
    wavepacket_span: float = 2e-6
    measured: Measured | None = None

    @property
    def n_detectors(self) -> int:
        return len(self.detector_efficiencies)

    @property
    def mean_detector_efficiency(self) -> float:
        return float(np.mean(self.detector_efficiencies))

    @property
    def projection_acceptance(self) -> float:
        """Fraction of photons kept by the analyzer on average.

        A single-output analyzer (polarizer + one detector) absorbs half of the
        partially unpolarized photons; a two-output analyzer keeps both.
        """
        return 0.5 if self.n_detectors == 1 else 1.0

    @property
    def n_configurations(self) -> int:
        """Number of distinct acquisition settings covering the 36 projections."""
        return 36 // (2 * self.n_detectors)

    @property
    def setting_duration(self) -> float:
        return self.acquisition_duration / self.n_configurations

    @property
    def window_start(self) -> float:
        return self.background_span

    @property
    def histogram_span(self) -> float:
        return self.background_span + self.wavepacket_span

    def effective_dark_rates(self) -> list[float]:
        """Per-detector background rate including conversion noise split evenly."""
        rates = list(self.dark_count_rates)
        if self.converter is not None:
            share = self.converter.conversion_noise_rate / self.n_detectors
            rates = [dc + share * eta for dc, eta in zip(rates, self.detector_efficiencies)]
        return rates

    def to_json(self) -> dict:
        return asdict(self)


_PROBABILITIES = (
    "cgc_weight_R",
    "mixture_fraction_wanted",
    "branching_854",
    "collection_halo",
    "fiber_coupling",
    "wavepacket_window_fraction",
    "depolarization_p",
    "readout_infidelity",
    "analyzer_transmission",
)
_POSITIVE = ("repetition_rate", "window", "acquisition_duration", "bin_width", "background_span", "wavepacket_span")


def validate(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    errors = []

    def prob(name, value):
        if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
            errors.append((name, f"must be a probability in [0, 1], got {value!r}"))

    for name in _PROBABILITIES:
        prob(name, getattr(cfg, name))
    for name in _POSITIVE:
        value = getattr(cfg, name)
        if not isinstance(value, (int, float)) or not value > 0:
            errors.append((name, f"must be > 0, got {value!r}"))
    if cfg.larmor_frequency < 0:
        errors.append(("larmor_frequency", "must be >= 0"))
    if cfg.wavepacket_window_fraction in (0, 1):
        errors.append(("wavepacket_window_fraction", "must lie strictly between 0 and 1"))
    n = len(cfg.detector_efficiencies)
    if n not in (1, 2):
        errors.append(("detector_efficiencies", "one or two detectors are supported"))
    for i, eta in enumerate(cfg.detector_efficiencies):
        prob(f"detector_efficiencies[{i}]", eta)
    if len(cfg.dark_count_rates) != n:
        errors.append(("dark_count_rates", f"needs {n} entries, one per detector"))
    for i, dc in enumerate(cfg.dark_count_rates):
        if dc < 0:
            errors.append((f"dark_count_rates[{i}]", "must be >= 0"))
    if len(cfg.detector_efficiency_sigmas) != n:
        errors.append(("detector_efficiency_sigmas", f"needs {n} entries, one per detector"))
    if cfg.window > cfg.wavepacket_span:
        errors.append(("window", "must not exceed wavepacket_span"))
    if cfg.converter is not None:
        c = cfg.converter
        for name in ("fiber_transmission", "external_efficiency", "stabilization_duty"):
            prob(f"converter.{name}", getattr(c, name))
        if c.conversion_noise_rate < 0:
            errors.append(("converter.conversion_noise_rate", "must be >= 0"))
        prob("converter.process_channel.depolarization_p", c.process_channel.depolarization_p)
        if not 0.0 <= c.process_channel.arm_imbalance < 1.0:
            errors.append(("converter.process_channel.arm_imbalance", "must lie in [0, 1)"))
    if cfg.measured is not None:
        if cfg.measured.duration <= 0:
            errors.append(("measured.duration", "must be > 0"))
        if cfg.measured.signal_events < 0:
            errors.append(("measured.signal_events", "must be >= 0"))
    return errors


def _build(cls, obj: Any, path: str, errors: list):
    if not isinstance(obj, dict):
        errors.append((path or cls.__name__, "expected an object"))
        return None
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        if key not in known:
            errors.append((f"{path}{key}", "unknown field"))
            continue
        if key == "process_channel":
            value = _build(ProcessChannel, value, f"{path}{key}.", errors)
        elif key == "converter" and value is not None:
            value = _build(ConverterConfig, value, f"{path}{key}.", errors)
        elif key == "measured" and value is not None:
            value = _build(Measured, value, f"{path}{key}.", errors)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append((path or cls.__name__, str(exc)))
        return None


def config_from_dict(obj: dict) -> ExperimentConfig:
    errors: list[tuple[str, str]] = []
    cfg = _build(ExperimentConfig, obj, "", errors)
    if cfg is not None:
        errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_configs(path: str | Path) -> dict[str, ExperimentConfig]:
    """Read and validate a config file; returns experiments keyed by name."""
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"invalid JSON: {exc}")]) from exc
    if isinstance(obj, dict) and "experiments" in obj:
        out, errors = {}, []
        for name, sub in obj["experiments"].items():
            try:
                cfg = config_from_dict(sub)
            except ConfigError as exc:
                errors.extend((f"experiments.{name}.{f}", m) for f, m in exc.errors)
                continue
            out[name] = cfg
        if errors:
            raise ConfigError(errors)
        return out
    cfg = config_from_dict(obj)
    return {cfg.label: cfg}


validate_config = load_configs


def reference_config_path() -> Path:
    return Path(__file__).with_name("data") / "reference_config.json"


def reference_configs() -> dict[str, ExperimentConfig]:
    return load_configs(reference_config_path())
