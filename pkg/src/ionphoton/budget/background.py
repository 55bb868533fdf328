"""Per-bin Poissonian subtraction of flat dark coincidences."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..tomography.histograms import CoincidenceHistogram, HistogramError, check_complete
from .chain import BudgetError

BACKGROUND_FRACTIONS = {"none": 0.0, "detector": 0.935, "total": 1.0}


def background_fraction(mode: str | float) -> float:
    if isinstance(mode, str):
        key = "detector" if mode == "detector-only" else mode
        if key not in BACKGROUND_FRACTIONS:
            raise BudgetError(f"unknown background mode {mode!r}")
        return BACKGROUND_FRACTIONS[key]
    return float(mode)


def dark_level(h: CoincidenceHistogram) -> tuple[float, float]:
    """Mean dark coincidences per bin from the pre-onset region, with its variance."""
    m = h.background_mask()
    n = int(m.sum())
    if n == 0:
        raise HistogramError(f"{h.setting.label}: no bins before the wavepacket onset")
    lam = float(h.counts[m].sum()) / n
    return lam, lam / n


def subtract_background(histograms, fraction: float | str = 1.0) -> list[CoincidenceHistogram]:
    """Histograms with ``fraction`` of the estimated dark level removed from every bin.

    Corrected bins keep their (possibly negative) means. Each bin's variance
    is its raw Poisson variance plus the scaled variance of the dark-level
    estimate; the removed amount is stored as ``background`` so a likelihood
    can model the raw count as signal plus known background.
    """
    f = background_fraction(fraction)
    if not 0.0 <= f <= 1.0:
        raise BudgetError("background fraction must lie in [0, 1]")
    hs = list(histograms)
    check_complete(hs)
    out = []
    for h in hs:
        if h.variances is not None:
            raise HistogramError(f"{h.setting.label}: histogram is already background-corrected")
        lam, lam_var = dark_level(h)
        b = np.full(h.counts.shape, f * lam)
        out.append(
            replace(
                h,
                counts=h.counts - b,
                variances=h.counts + f**2 * lam_var,
                background=b,
                meta={**h.meta, "dark_per_bin": lam, "background_fraction": f},
            )
        )
    return out


def corrected_totals(histograms) -> dict:
    """Windowed corrected signal mean and variance per setting label."""
    return {h.setting.label: h.windowed() for h in histograms}
