"""Batch command-line front end.

Every command writes deterministic JSON (sorted keys, no timestamps) and CSV
files into the output directory, plus PNG figures unless ``--no-figures``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .budget import (
    CONVERTER_H_ARM,
    CONVERTER_V_ARM,
    BudgetError,
    CurveFitError,
    EfficiencyCurvePoint,
    chain_product,
    compare,
    eta_ext,
    fit_efficiency_curve,
    rate_budget,
    working_point,
)
from .budget.background import background_fraction
from .budget.curve import first_maximum_power, write_curve_csv
from .config import ConfigError, ExperimentConfig, load_configs, reference_config_path
from .pipeline import analysis_target, reconstruct, reproduce_tables, table_rows
from .quantum import StateError, basis_labels
from .simulation import build_true_state, detection_probability_chain, simulate, simulate_probe_stokes
from .tomography import (
    FringeFitError,
    HistogramError,
    ProcessTomographyError,
    StokesVector,
    fit_larmor_fringe,
    load_histograms,
    probe_states,
    process_fidelity,
    process_tomography,
    save_histograms,
)
from .tomography.state import MLEConvergenceError
from .wavepacket import WavepacketError, wavepacket_sampler

OUT_ENV = "IONPHOTON_OUT"
COMMANDS = ("simulate", "tomo", "process-tomo", "budget", "fit-curve", "reproduce-tables")
BACKGROUND_CHOICES = ("none", "detector", "detector-only", "total")


class InputError(ValueError):
    pass


@dataclass
class PipelineManifest:
    command: str
    config_path: str
    input_paths: list[str]
    output_dir: str
    seed: int = 0
    background_mode: str = "total"
    experiment: str | None = None
    duration_scale: float = 1.0
    figures: bool = True
    error_bars: bool = True
    jobs: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        background_fraction(self.background_mode)
        for p in [self.config_path, *self.input_paths]:
            if not Path(p).exists():
                raise InputError(f"path does not exist: {p}")

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_path": str(self.config_path),
            "input_paths": [str(p) for p in self.input_paths],
            "seed": self.seed,
            "background_mode": self.background_mode,
            "experiment": self.experiment,
            "duration_scale": self.duration_scale,
            "figures": self.figures,
            "error_bars": self.error_bars,
            "options": self.options,
        }


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def histogram_rows(histograms):
    for h in histograms:
        var, bkg = h.var, h.bkg
        for k in range(h.counts.size):
            yield [h.setting.label, h.edges[k] * 1e9, h.counts[k], var[k], bkg[k], int(h.window_mask()[k])]


def rho_rows(rho: np.ndarray):
    labels = basis_labels()
    for i in range(4):
        for j in range(4):
            yield [labels[i], labels[j], rho[i, j].real, rho[i, j].imag]


def _select(configs: dict[str, ExperimentConfig], name: str | None) -> ExperimentConfig:
    if name is None:
        return next(iter(configs.values()))
    if name not in configs:
        raise InputError(f"experiment {name!r} not in config (have {', '.join(configs)})")
    return configs[name]


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(m: PipelineManifest, out: Path) -> list[Path]:
    cfg = _select(load_configs(m.config_path), m.experiment)
    truth = build_true_state(cfg)
    hs = simulate(cfg, seed=m.seed, duration_scale=m.duration_scale, truth=truth)
    written = [out / "histograms.json"]
    save_histograms(hs, written[0])
    written.append(write_json(out / "truth.json", {
        "experiment": cfg.label,
        "figures_of_merit": truth.figures_of_merit(),
        "rho_true": truth.rho_true.to_json(),
        "detection_chain": detection_probability_chain(cfg).to_json(),
        "windowed_counts": sum(h.windowed()[0] for h in hs),
    }))
    written.append(write_csv(out / "histograms.csv", ["setting", "bin_start_ns", "counts", "variance", "background", "in_window"], histogram_rows(hs)))
    if m.figures:
        from .plotting import plot_histograms

        written.append(plot_histograms(hs, out / "histograms.png", cfg.label))
    return written


def cmd_tomo(m: PipelineManifest, out: Path) -> list[Path]:
    cfg = _select(load_configs(m.config_path), m.experiment)
    if not m.input_paths:
        raise InputError("tomo needs a histogram file (--input)")
    hs = [h for p in m.input_paths for h in load_histograms(p)]
    res = reconstruct(hs, cfg, m.background_mode, with_errors=m.error_bars, target=analysis_target(cfg))
    written = [write_json(out / "tomography.json", res.to_json()), write_json(out / "rho.json", res.rho.to_json())]
    written.append(write_csv(out / "rho.csv", ["row", "col", "re", "im"], rho_rows(res.rho.matrix)))
    if m.figures:
        from .plotting import plot_density_matrix, plot_fringe

        written.append(plot_density_matrix(res.rho.matrix, out / "rho.png", f"{cfg.label} ({res.mode})"))
        wp = wavepacket_sampler(cfg)
        h = next(h for h in sorted(hs, key=lambda h: h.setting) if h.setting.ion_axis == "x")
        try:
            fit = fit_larmor_fringe(h, cfg.larmor_frequency, wp, fit_frequency=False)
            written.append(plot_fringe(h, fit, wp, out / "fringe.png"))
        except FringeFitError:
            pass
    return written


def _load_stokes(path: str) -> dict[str, StokesVector]:
    obj = json.loads(Path(path).read_text())
    obj = obj.get("probes", obj)
    return {k: StokesVector(tuple(v["s"]), v.get("n")) for k, v in obj.items()}


def cmd_process_tomo(m: PipelineManifest, out: Path) -> list[Path]:
    probes = probe_states()
    if m.input_paths:
        stokes = _load_stokes(m.input_paths[0])
        if sorted(stokes) != sorted(probes):
            raise InputError(f"probe file must contain exactly {sorted(probes)}")
        probes = {k: probes[k] for k in stokes}
    else:
        cfg = _select(load_configs(m.config_path), m.experiment)
        counts = int(m.options.get("counts", 10_000))
        stokes = simulate_probe_stokes(cfg.converter, counts, np.random.default_rng(m.seed), probes)
    pm = process_tomography(probes, stokes)
    f, s = process_fidelity(pm)
    written = [write_json(out / "process.json", {
        **pm.to_json(),
        "probes": {k: {"s": list(v.s), "n": v.n} for k, v in stokes.items()},
    })]
    labels = ["I", "X", "Y", "Z"]
    written.append(write_csv(out / "chi.csv", ["row", "col", "re", "im"], (
        [labels[i], labels[j], pm.chi[i, j].real, pm.chi[i, j].imag] for i in range(4) for j in range(4)
    )))
    if m.figures:
        from .plotting import plot_chi

        written.append(plot_chi(pm.chi, out / "chi.png"))
    return written


def cmd_budget(m: PipelineManifest, out: Path) -> list[Path]:
    configs = load_configs(m.config_path)
    if m.experiment is not None:
        configs = {m.experiment: _select(configs, m.experiment)}
    reports = {name: rate_budget(cfg) for name, cfg in configs.items()}
    payload = {"experiments": {k: r.to_json() for k, r in reports.items()}}
    names = list(reports)
    with_conv = [n for n in names if configs[n].converter is not None and not configs[n].carving]
    without = [n for n in names if configs[n].converter is None]
    if with_conv and without:
        payload["comparison"] = compare(reports[without[0]], reports[with_conv[0]])
    h, sh = chain_product(CONVERTER_H_ARM)
    v, sv = chain_product(CONVERTER_V_ARM)
    payload["converter_arms"] = {
        "H": {"value": h, "sigma": sh, "factors": CONVERTER_H_ARM.to_json()},
        "V": {"value": v, "sigma": sv, "factors": CONVERTER_V_ARM.to_json()},
    }
    written = [write_json(out / "budget.json", payload)]
    rows = []
    for name, r in reports.items():
        for k in ("detected_rate", "generated_rate", "generated_rate_sigma", "theoretical_generated_rate",
                  "total_detection_efficiency", "background_events", "background_sigma", "signal_events", "sbr"):
            rows.append([name, k, getattr(r, k)])
        for i, rate in enumerate(r.effective_dark_rates):
            rows.append([name, f"effective_dark_rate_{i + 1}", rate])
        for f in r.chain["generation"] + r.chain["detection"]:
            rows.append([name, f"factor_{f['name']}", f["value"]])
    written.append(write_csv(out / "budget.csv", ["experiment", "quantity", "value"], rows))
    if m.figures:
        from .plotting import plot_budget

        written.append(plot_budget(reports, out / "budget.png"))
    return written


def _synthetic_curves(seed: int, noise: float = 0.02) -> tuple[dict, float]:
    """Two arms with the second one peaking at a higher pump power."""
    rng = np.random.default_rng(seed)
    length = 0.04
    out = {}
    for name, eta_max, peak in (("H", 0.30, 0.7), ("V", 0.30, 1.1)):
        eta_nor = first_maximum_power(1.0, length) / peak
        powers = np.linspace(0.05, 1.1 * peak, 15)
        y = eta_ext(powers, eta_max, eta_nor, length)
        sig = noise * eta_max
        out[name] = [EfficiencyCurvePoint(float(p), float(v + rng.normal(0, sig)), sig) for p, v in zip(powers, y)]
    return out, length


def _load_curves(path: str) -> tuple[dict, float]:
    obj = json.loads(Path(path).read_text())
    if "length" not in obj or "arms" not in obj:
        raise InputError("curve file needs 'length' and 'arms'")
    arms = {k: [EfficiencyCurvePoint(**p) for p in pts] for k, pts in obj["arms"].items()}
    return arms, float(obj["length"])


def cmd_fit_curve(m: PipelineManifest, out: Path) -> list[Path]:
    points, length = _load_curves(m.input_paths[0]) if m.input_paths else _synthetic_curves(m.seed)
    fits = {k: fit_efficiency_curve(v, length) for k, v in points.items()}
    payload = {"fits": {k: f.to_json() for k, f in fits.items()}, "length": length}
    wp = None
    if len(fits) == 2:
        a, b = fits.values()
        try:
            wp = working_point(a, b)
            payload["working_point"] = {"pump_power": wp[0], "efficiency": wp[1]}
        except CurveFitError as exc:
            payload["working_point"] = None
            payload["working_point_error"] = str(exc)
    written = [write_json(out / "curve_fit.json", payload)]
    write_curve_csv(out / "curves.csv", fits, points)
    written.append(out / "curves.csv")
    if m.figures:
        from .plotting import plot_efficiency_curves

        written.append(plot_efficiency_curves(fits, points, out / "curves.png", wp))
    return written


def cmd_reproduce_tables(m: PipelineManifest, out: Path) -> list[Path]:
    configs = load_configs(m.config_path)
    results = reproduce_tables(configs, m.seed, m.duration_scale, jobs=m.jobs, with_errors=m.error_bars)
    rows = table_rows(results)
    written = [write_json(out / "tables.json", {"cells": [r.to_json() for r in results], "rows": rows})]
    header = list(rows[0])
    written.append(write_csv(out / "tables.csv", header, ([r[k] for k in header] for r in rows)))
    for r in results:
        written.append(write_csv(out / f"rho_{r.label}_{r.mode}.csv", ["row", "col", "re", "im"], rho_rows(r.rho.matrix)))
    if m.figures:
        from .plotting import plot_table

        written.append(plot_table(rows, out / "tables.png"))
    return written


HANDLERS = {
    "simulate": cmd_simulate,
    "tomo": cmd_tomo,
    "process-tomo": cmd_process_tomo,
    "budget": cmd_budget,
    "fit-curve": cmd_fit_curve,
    "reproduce-tables": cmd_reproduce_tables,
}


def run(manifest: PipelineManifest) -> list[Path]:
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = HANDLERS[manifest.command](manifest, out)
    write_json(out / "manifest.json", {**manifest.to_json(), "outputs": sorted(p.name for p in written)})
    return written


# ---------------------------------------------------------------------------
# entry point

_ERROR_CODES = [
    (ConfigError, "config_error", "config"),
    (HistogramError, "histogram_error", "tomography"),
    (FringeFitError, "fringe_fit_error", "tomography"),
    (MLEConvergenceError, "mle_not_converged", "tomography"),
    (ProcessTomographyError, "process_tomography_error", "tomography"),
    (BudgetError, "budget_error", "budget"),
    (WavepacketError, "wavepacket_error", "experiment-sim"),
    (StateError, "state_error", "quantum-core"),
    (InputError, "input_error", "cli-io"),
    (json.JSONDecodeError, "malformed_json", "cli-io"),
    (OSError, "io_error", "cli-io"),
]


def error_payload(exc: BaseException, command: str | None) -> dict:
    for cls, code, module in _ERROR_CODES:
        if isinstance(exc, cls):
            break
    else:
        code, module = "internal_error", "cli-io"
    context = {"command": command, "exception": type(exc).__name__}
    if isinstance(exc, ConfigError):
        context["errors"] = [{"field": f, "message": msg} for f, msg in exc.errors]
    return {"code": code, "module": module, "message": str(exc), "context": context}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=str(reference_config_path()), help="experiment config JSON (default: shipped reference config)")
    common.add_argument("--experiment", default=None, help="experiment name inside the config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./ionphoton-out)")
    common.add_argument("--background", choices=BACKGROUND_CHOICES, default="total")
    common.add_argument("--duration-scale", type=float, default=1.0, help="scale acquisition time (statistics)")
    common.add_argument("--no-figures", action="store_true")
    common.add_argument("--no-error-bars", action="store_true")

    p = argparse.ArgumentParser(prog="ionphoton", description="Ion-photon entanglement simulation and analysis")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate 36-setting coincidence histograms")
    s = sub.add_parser("tomo", parents=[common], help="reconstruct the state from histogram files")
    s.add_argument("--input", nargs="+", required=True)
    s = sub.add_parser("process-tomo", parents=[common], help="converter process tomography")
    s.add_argument("--input", nargs="*", default=[], help="probe Stokes JSON; simulated from the config if absent")
    s.add_argument("--counts", type=int, default=10_000, help="photons per Stokes component when simulating")
    sub.add_parser("budget", parents=[common], help="rate, background and SBR budget")
    s = sub.add_parser("fit-curve", parents=[common], help="fit efficiency versus pump power")
    s.add_argument("--input", nargs="*", default=[], help="curve JSON; synthetic two-arm data if absent")
    s = sub.add_parser("reproduce-tables", parents=[common], help="all configuration x background cells")
    s.add_argument("--jobs", type=int, default=1)
    return p


def main(argv: list[str] | None = None) -> int:
    args = None
    try:
        args = build_parser().parse_args(argv)
        out = args.out or os.environ.get(OUT_ENV) or "ionphoton-out"
        manifest = PipelineManifest(
            command=args.command,
            config_path=args.config,
            input_paths=list(getattr(args, "input", []) or []),
            output_dir=out,
            seed=args.seed,
            background_mode=args.background,
            experiment=args.experiment,
            duration_scale=args.duration_scale,
            figures=not args.no_figures,
            error_bars=not args.no_error_bars,
            jobs=getattr(args, "jobs", 1),
            options={"counts": args.counts} if args.command == "process-tomo" else {},
        )
        written = run(manifest)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error record
        print(json.dumps(error_payload(exc, getattr(args, "command", None)), sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, InputError)) else 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
