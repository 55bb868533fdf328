"""Figure rendering for the CLI report path (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .quantum import basis_labels  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_density_matrix(rho: np.ndarray, path: str | Path, title: str = "") -> Path:
    """Real and imaginary parts as 3D bar charts."""
    m = np.asarray(rho)
    labels = basis_labels()
    fig = plt.figure(figsize=(10, 4.5))
    xx, yy = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    for k, (part, name) in enumerate(((m.real, "Re"), (m.imag, "Im"))):
        ax = fig.add_subplot(1, 2, k + 1, projection="3d")
        z = part.ravel()
        colors = plt.cm.coolwarm((z + 1) / 2)
        ax.bar3d(xx.ravel() - 0.35, yy.ravel() - 0.35, np.zeros(16), 0.7, 0.7, z, color=colors, shade=True)
        ax.set_xticks(range(4), labels, fontsize=6)
        ax.set_yticks(range(4), labels, fontsize=6)
        ax.set_zlim(min(-0.1, z.min()), max(0.7, z.max()))
        ax.set_title(f"{name} rho")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_histograms(histograms, path: str | Path, title: str = "") -> Path:
    """All 36 coincidence histograms on a 6x6 grid (ns on the time axis)."""
    hs = sorted(histograms, key=lambda h: h.setting)
    fig, axes = plt.subplots(6, 6, figsize=(14, 12), sharex=True)
    for ax, h in zip(axes.ravel(), hs):
        ax.step(h.centers * 1e9, h.counts, where="mid", lw=0.7)
        ax.axvspan(h.window_start * 1e9, h.window_end * 1e9, color="0.9", zorder=-1)
        ax.set_title(h.setting.label, fontsize=7)
        ax.tick_params(labelsize=6)
    for ax in axes[-1]:
        ax.set_xlabel("time (ns)", fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_fringe(histogram, fit, wavepacket, path: str | Path) -> Path:
    """Window bins of one superposition-basis histogram with the fitted fringe."""
    h = histogram
    m = h.window_mask()
    e = wavepacket.bin_weights(h.edges)[m]
    z = wavepacket.bin_phasors(h.edges, fit.larmor_frequency, h.window_start)[m]
    model = fit.coefficients @ np.vstack([e, z.real, z.imag]) + fit.offset
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(h.centers[m] * 1e9, h.counts[m], yerr=np.sqrt(np.clip(h.var[m], 0, None)), fmt="o", ms=3)
    ax.plot(h.centers[m] * 1e9, model, "-")
    ax.set_xlabel("detection time (ns)")
    ax.set_ylabel("coincidences per bin")
    ax.set_title(f"{h.setting.label}: V = {fit.visibility:.3f}, phi = {fit.phase:.3f} rad")
    fig.tight_layout()
    return _save(fig, path)


def plot_efficiency_curves(fits: dict, points: dict, path: str | Path, working_point=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, fit in fits.items():
        pts = points.get(name, [])
        if pts:
            ax.errorbar(
                [p.pump_power for p in pts], [p.efficiency for p in pts], yerr=[p.sigma for p in pts], fmt="o", ms=3
            )
        pmax = max([p.pump_power for p in pts] + [1.5 * fit.peak_power])
        grid = np.linspace(0, pmax, 300)
        ax.plot(grid, fit(grid), label=f"{name}: eta_max = {fit.eta_max:.3f}")
    if working_point is not None:
        ax.plot(*working_point, "k*", ms=10, label="working point")
    ax.set_xlabel("pump power (W)")
    ax.set_ylabel("external efficiency")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_chi(chi: np.ndarray, path: str | Path) -> Path:
    labels = ["I", "X", "Y", "Z"]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.6))
    for ax, part, name in zip(axes, (chi.real, chi.imag), ("Re", "Im")):
        im = ax.imshow(part, cmap="coolwarm", vmin=-1, vmax=1)
        ax.set_xticks(range(4), labels)
        ax.set_yticks(range(4), labels)
        ax.set_title(f"{name} chi")
        for (i, j), v in np.ndenumerate(part):
            ax.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=axes, shrink=0.8)
    return _save(fig, path)


def plot_table(rows: list[dict], path: str | Path) -> Path:
    """Grouped bars of fidelity, Bell fidelity and purity per measurement and mode."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), sharey=True)
    keys = (("fidelity", "F"), ("bell_fidelity", "F_Bell"), ("purity", "P"))
    names = list(dict.fromkeys(r["measurement"] for r in rows))
    modes = list(dict.fromkeys(r["background_mode"] for r in rows))
    width = 0.8 / max(len(modes), 1)
    for ax, (key, label) in zip(axes, keys):
        for j, mode in enumerate(modes):
            xs, ys, es = [], [], []
            for i, n in enumerate(names):
                for r in rows:
                    if r["measurement"] == n and r["background_mode"] == mode:
                        xs.append(i + j * width)
                        ys.append(100 * r[key])
                        es.append(100 * np.nan_to_num(r[f"sigma_{key}"]))
            ax.bar(xs, ys, width, yerr=es, label=mode)
        ax.set_xticks(np.arange(len(names)) + 0.4 - width / 2, names)
        ax.set_title(label)
        ax.set_ylim(80, 100)
    axes[0].set_ylabel("%")
    axes[-1].legend(title="background")
    fig.tight_layout()
    return _save(fig, path)


def plot_budget(reports: dict, path: str | Path) -> Path:
    """Per-factor efficiency bars of each experiment's detection chain (log scale)."""
    fig, axes = plt.subplots(1, len(reports), figsize=(4.5 * len(reports), 4), squeeze=False)
    for ax, (name, rep) in zip(axes[0], reports.items()):
        factors = rep.chain["generation"] + rep.chain["detection"]
        ax.barh([f["name"] for f in factors], [f["value"] for f in factors], color="tab:blue")
        ax.set_xscale("log")
        ax.set_xlim(1e-2, 1.0)
        ax.invert_yaxis()
        ax.tick_params(labelsize=7)
        ax.set_title(f"{name}: SBR {rep.sbr:.1f}", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
