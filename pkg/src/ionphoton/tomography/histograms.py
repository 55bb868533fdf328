"""Basis settings and time-binned coincidence histograms."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from ..quantum import projector

AXES = ("x", "y", "z")
SIGNS = (1, -1)


class HistogramError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class BasisSetting:
    photon_axis: str
    photon_sign: int
    ion_axis: str
    ion_sign: int

    def __post_init__(self):
        if self.photon_axis not in AXES or self.ion_axis not in AXES:
            raise HistogramError(f"unknown axis in {self}")
        if self.photon_sign not in SIGNS or self.ion_sign not in SIGNS:
            raise HistogramError(f"signs must be +1 or -1 in {self}")

    @property
    def label(self) -> str:
        return f"{'+' if self.photon_sign > 0 else '-'}{self.photon_axis}/{'+' if self.ion_sign > 0 else '-'}{self.ion_axis}"

    @property
    def axes(self) -> tuple[str, str]:
        return self.photon_axis, self.ion_axis

    def projector(self) -> np.ndarray:
        """Time-independent joint projector (no Larmor precession)."""
        return np.kron(projector(self.photon_axis, self.photon_sign), projector(self.ion_axis, self.ion_sign))

    def to_json(self) -> dict:
        return {"photon": self.label.split("/")[0], "ion": self.label.split("/")[1]}

    @classmethod
    def from_json(cls, obj) -> "BasisSetting":
        if isinstance(obj, str):
            photon, ion = obj.split("/")
        else:
            photon, ion = obj["photon"], obj["ion"]
        return cls(photon[1], int(photon[0] + "1"), ion[1], int(ion[0] + "1"))

    @classmethod
    def parse(cls, label: str) -> "BasisSetting":
        return cls.from_json(label)


def all_settings() -> list[BasisSetting]:
    return [BasisSetting(pa, ps, ia, isg) for pa, ps, ia, isg in product(AXES, SIGNS, AXES, SIGNS)]


@dataclass
class CoincidenceHistogram:
    """Coincidences versus photon detection time for one basis setting.

    Times are in seconds from the start of the recorded trace; bin ``k`` covers
    ``[k * bin_width, (k + 1) * bin_width)``. Background-subtracted
    histograms carry float ``counts`` together with per-bin ``variances`` and
    the ``background`` that was removed.
    """

    setting: BasisSetting
    bin_width: float
    counts: np.ndarray
    window_start: float
    window_end: float
    duration: float
    variances: np.ndarray | None = None
    background: np.ndarray | None = None
    group: str = "all"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.variances is not None:
            self.variances = np.asarray(self.variances, dtype=float)
        if self.background is not None:
            self.background = np.asarray(self.background, dtype=float)
        span = self.bin_width * self.counts.size
        if not 0 <= self.window_start < self.window_end <= span * (1 + 1e-12):
            raise HistogramError(
                f"{self.setting.label}: window [{self.window_start}, {self.window_end}] outside span {span}"
            )
        if self.duration <= 0:
            raise HistogramError(f"{self.setting.label}: duration must be positive")
        if self.variances is None and np.any(self.counts < 0):
            raise HistogramError(f"{self.setting.label}: raw counts must be non-negative")

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.counts.size + 1) * self.bin_width

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.counts.size) + 0.5) * self.bin_width

    @property
    def var(self) -> np.ndarray:
        return self.counts.copy() if self.variances is None else self.variances

    @property
    def bkg(self) -> np.ndarray:
        return np.zeros_like(self.counts) if self.background is None else self.background

    def window_mask(self) -> np.ndarray:
        e = self.edges
        eps = 1e-6 * self.bin_width
        return (e[:-1] >= self.window_start - eps) & (e[1:] <= self.window_end + eps)

    def background_mask(self) -> np.ndarray:
        """Bins ending before the wavepacket onset."""
        return self.edges[1:] <= self.window_start + 1e-6 * self.bin_width

    def windowed(self) -> tuple[float, float]:
        m = self.window_mask()
        return float(self.counts[m].sum()), float(self.var[m].sum())

    def scaled(self, factor: float) -> "CoincidenceHistogram":
        return replace(
            self,
            counts=self.counts * factor,
            variances=None if self.variances is None else self.variances * factor**2,
            background=None if self.background is None else self.background * factor,
        )

    def to_json(self) -> dict:
        counts = self.counts
        as_int = self.variances is None and np.all(counts == np.round(counts))
        obj = {
            "setting": self.setting.to_json(),
            "bin_width_ns": self.bin_width * 1e9,
            "counts": counts.astype(int).tolist() if as_int else counts.tolist(),
            "window_ns": [self.window_start * 1e9, self.window_end * 1e9],
            "duration_s": self.duration,
        }
        if self.variances is not None:
            obj["variances"] = self.variances.tolist()
        if self.background is not None:
            obj["background"] = self.background.tolist()
        if self.group != "all":
            obj["group"] = self.group
        if self.meta:
            obj["meta"] = self.meta
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "CoincidenceHistogram":
        try:
            return cls(
                setting=BasisSetting.from_json(obj["setting"]),
                bin_width=float(obj["bin_width_ns"]) * 1e-9,
                counts=np.asarray(obj["counts"], dtype=float),
                window_start=float(obj["window_ns"][0]) * 1e-9,
                window_end=float(obj["window_ns"][1]) * 1e-9,
                duration=float(obj["duration_s"]),
                variances=obj.get("variances"),
                background=obj.get("background"),
                group=obj.get("group", "all"),
                meta=obj.get("meta", {}),
            )
        except KeyError as exc:
            raise HistogramError(f"histogram record missing field {exc}") from exc


def check_complete(histograms) -> dict[BasisSetting, CoincidenceHistogram]:
    """Index histograms by setting; all 36 settings must be present exactly once."""
    by_setting = {}
    for h in histograms:
        if h.setting in by_setting:
            raise HistogramError(f"duplicate setting {h.setting.label}")
        by_setting[h.setting] = h
    missing = [s.label for s in all_settings() if s not in by_setting]
    if missing:
        raise HistogramError(f"missing settings: {', '.join(missing)}")
    return by_setting


def save_histograms(histograms, path: str | Path) -> None:
    payload = {"histograms": [h.to_json() for h in histograms]}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_histograms(path: str | Path) -> list[CoincidenceHistogram]:
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, dict) and "histograms" in obj:
        obj = obj["histograms"]
    if isinstance(obj, dict):
        obj = [obj]
    return [CoincidenceHistogram.from_json(o) for o in obj]
