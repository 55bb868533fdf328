"""End-to-end acceptance criteria, each checked at its stated tolerance.

Every test appends one ``[PASS]`` or ``[FAIL]`` line to the terminal summary.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ionphoton.budget import (
    CONVERTER_H_ARM,
    CONVERTER_V_ARM,
    EfficiencyCurvePoint,
    background_budget,
    chain_product,
    compare,
    eta_ext,
    fit_efficiency_curve,
    rate_budget,
)
from ionphoton.budget.curve import first_maximum_power
from ionphoton.measurement import static_operator
from ionphoton.pipeline import derive_seed, reconstruct, reproduce_tables, run_cell
from ionphoton.quantum import max_fidelity_for_purity, random_density_matrix, random_unitary, trace_distance
from ionphoton.simulation import build_true_state, simulate
from ionphoton.tomography import (
    MLEConvergenceError,
    StokesVector,
    all_settings,
    data_from_counts,
    expectations_from_counts,
    linear_reconstruct,
    mle_reconstruct,
    probe_states,
    process_fidelity,
    process_tomography,
)


@contextmanager
def criterion(number: int, title: str, limit: float):
    """Record a pass/fail line with the runtime; the runtime limit is part of the check."""
    notes: list[str] = []
    t0 = time.perf_counter()
    try:
        yield notes
        elapsed = time.perf_counter() - t0
        assert elapsed < limit, f"runtime {elapsed:.1f} s exceeds {limit:g} s"
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        ACCEPTANCE_LINES.append(f"[FAIL] criterion {number}: {title} ({elapsed:.2f} s) {exc}".splitlines()[0])
        raise
    ACCEPTANCE_LINES.append(f"[PASS] criterion {number}: {title} ({elapsed:.2f} s) {'; '.join(notes)}")


def _close(value, target, rel):
    assert value == pytest.approx(target, rel=rel), f"{value} vs {target}"


TABLE = {
    # (measurement, background mode): (F, F_Bell, P) in percent
    ("unconverted", "total"): (98.3, 95.5, 96.7),
    ("unconverted", "none"): (95.9, 93.3, 92.1),
    ("converted", "total"): (97.7, 94.8, 95.8),
    ("converted", "detector"): (97.3, 94.5, 95.1),
    ("converted", "none"): (94.8, 92.2, 90.3),
    ("carving", "total"): (None, 98.2, 96.7),
    ("carving", "detector"): (None, 97.7, 95.8),
    ("carving", "none"): (None, 93.4, 87.8),
}


def test_criterion_1_budget_arithmetic(configs):
    with criterion(1, "rate and background budget", 1.0) as notes:
        unc = rate_budget(configs["unconverted"])
        conv = rate_budget(configs["converted"])
        cmp = compare(unc, conv)
        checks = [
            ("gamma_854_gen", unc.generated_rate, 236),
            ("gamma_854_gen_theo", unc.theoretical_generated_rate, 238),
            ("gamma_1310_det", conv.detected_rate, 24.8),
            ("gamma_1310_gen", conv.generated_rate, 43.5),
            ("eta_1310_trans", configs["converted"].converter.transmission, 0.175),
            ("efficiency_ratio", cmp["efficiency_ratio"], 0.427),
            ("BG_854", unc.background_events, 3803),
            ("dark_rate_1", conv.effective_dark_rates[0], 62.7),
            ("dark_rate_2", conv.effective_dark_rates[1], 59.9),
            ("BG_1310", background_budget(configs["converted"])[0], 7935),
            ("SBR_854", unc.sbr, 29.5),
            ("SBR_1310", conv.sbr, 24.3),
        ]
        for name, value, target in checks:
            assert value == pytest.approx(target, rel=0.005), f"{name} = {value} vs {target}"
        worst = max(abs(v / t - 1) for _, v, t in checks)
        notes.append(f"worst deviation {100 * worst:.2f}%, gamma_1310_gen sigma {conv.generated_rate_sigma:.2f}")


def test_criterion_2_chain_products():
    with criterion(2, "converter arm chain products", 1.0) as notes:
        h = chain_product(CONVERTER_H_ARM)[0]
        v = chain_product(CONVERTER_V_ARM)[0]
        assert abs(h - 0.265) <= 0.002 and abs(v - 0.266) <= 0.002, (h, v)
        notes.append(f"H {100 * h:.2f}%, V {100 * v:.2f}%")


def test_criterion_3_bound_formula():
    with criterion(3, "maximal fidelity for purity 0.967", 1.0) as notes:
        value = max_fidelity_for_purity(0.967)
        assert round(value, 3) == 0.983, value
        notes.append(f"{value:.5f}")


def test_criterion_4_unconverted_closed_loop(configs):
    with criterion(4, "unconverted closed loop at full statistics", 300.0) as notes:
        cfg = configs["unconverted"]
        assert cfg.dark_count_rates == [117.7]
        truth = build_true_state(cfg).figures_of_merit()
        assert truth["fidelity"] == pytest.approx(0.983, abs=5e-4)
        assert truth["purity"] == pytest.approx(0.967, abs=1e-3)
        hs = simulate(cfg, seed=0)
        total = reconstruct(hs, cfg, "total", with_errors=False)
        none = reconstruct(hs, cfg, "none", with_errors=False)
        assert total.signal_events == pytest.approx(114200, rel=0.02)
        assert abs(total.fidelity - truth["fidelity"]) <= 0.007, total.fidelity
        assert abs(none.fidelity - 0.959) <= 0.010, none.fidelity
        notes.append(
            f"signal {total.signal_events:.0f}, F total {total.fidelity:.4f} (truth {truth['fidelity']:.4f}), "
            f"F none {none.fidelity:.4f}"
        )


def test_criterion_5_reproduce_tables(configs):
    with criterion(5, "converted and carving tables", 900.0) as notes:
        results = reproduce_tables(configs, seed=0, with_errors=False)
        assert len(results) == len(TABLE)
        worst = 0.0
        for r in results:
            target = TABLE[(r.label, r.mode)]
            got = (r.fidelity, r.bell_fidelity, r.purity)
            for name, g, t in zip(("F", "F_Bell", "P"), got, target):
                if t is None:
                    continue
                dev = 100 * g - t
                worst = max(worst, abs(dev))
                assert abs(dev) <= 1.0, f"{r.label}/{r.mode} {name} = {100 * g:.2f}% vs {t}%"
        carving = {r.mode: r.bell_fidelity for r in results if r.label == "carving"}
        assert carving["total"] >= carving["detector"] >= carving["none"]
        notes.append(
            f"carving F_Bell {100 * carving['total']:.2f}/{100 * carving['detector']:.2f}/{100 * carving['none']:.2f}%, "
            f"worst cell {worst:.2f} points"
        )


def test_criterion_6_process_tomography():
    with criterion(6, "process tomography properties", 10.0) as notes:
        rng = np.random.default_rng(6)
        probes = probe_states()

        def run(channel):
            out = {k: StokesVector.from_state(channel(psi.projector())) for k, psi in probes.items()}
            return process_tomography(probes, out)

        f_id = process_fidelity(run(lambda r: r))[0]
        assert 1 - f_id <= 1e-9
        worst_dep = 0.0
        for p in np.linspace(0.0, 1.0, 11):
            pm = run(lambda r: (1 - p) * r + p * np.eye(2) / 2)
            worst_dep = max(worst_dep, abs(pm.chi[0, 0].real - (1 - 3 * p / 4)))
            for _ in range(20):
                rho = random_density_matrix(rng, dim=2).matrix
                assert np.allclose(pm.apply(rho), (1 - p) * rho + p * np.eye(2) / 2, atol=1e-10)
        assert worst_dep <= 1e-6
        second = []
        for _ in range(20):
            u = random_unitary(rng)
            ev = np.sort(np.linalg.eigvalsh(run(lambda r: u @ r @ u.conj().T).chi))
            second.append(ev[-2])
        assert max(second) <= 1e-6
        notes.append(f"1-F_id {1 - f_id:.1e}, depolarizing error {worst_dep:.1e}, max 2nd eigenvalue {max(second):.1e}")


def _static_counts(rho, n):
    return {s: n * float(np.trace(static_operator(s) @ rho.matrix).real) for s in all_settings()}


def _physical(rho):
    m = rho.matrix
    return (
        np.allclose(m, m.conj().T, atol=1e-12)
        and abs(np.trace(m).real - 1) < 1e-12
        and np.linalg.eigvalsh(m).min() >= -1e-12
    )


def test_criterion_7_mle_physicality():
    with criterion(7, "MLE physicality and noiseless consistency", 120.0) as notes:
        rng = np.random.default_rng(7)
        unphysical = non_converged = 0
        for k in range(200):
            kind = k % 4
            if kind == 0:
                counts = {s: float(rng.integers(0, 1000)) for s in all_settings()}
            elif kind == 1:
                counts = {s: float(rng.poisson(3.0)) for s in all_settings()}
            elif kind == 2:
                exact = _static_counts(random_density_matrix(rng, rank=1), 50.0)
                counts = {s: float(rng.poisson(v)) for s, v in exact.items()}
            else:
                counts = {s: float(rng.choice([0, 0, 1, 10_000])) for s in all_settings()}
            if sum(counts.values()) == 0:
                counts[all_settings()[k % 36]] = 1.0
            try:
                rho = mle_reconstruct(data_from_counts(counts)).rho
            except MLEConvergenceError as exc:
                non_converged += 1
                rho = exc.best.rho
            unphysical += not _physical(rho)
        assert unphysical == 0
        worst = 0.0
        for _ in range(50):
            rho = random_density_matrix(rng)
            counts = _static_counts(rho, 1000.0)
            lin = linear_reconstruct(expectations_from_counts(counts))
            res = mle_reconstruct(data_from_counts(counts), initial_guess=lin)
            worst = max(worst, trace_distance(res.rho, rho))
        assert worst <= 1e-5
        notes.append(f"200 tables physical ({non_converged} not converged), worst trace distance {worst:.1e}")


def test_criterion_8_curve_fit():
    with criterion(8, "efficiency curve fit", 10.0) as notes:
        length = 0.04
        eta_nor = first_maximum_power(1.0, length) / 0.8
        powers = np.linspace(0.05, 0.88, 15)
        clean = eta_ext(powers, 0.30, eta_nor, length)
        fit = fit_efficiency_curve([EfficiencyCurvePoint(p, y, 0.006) for p, y in zip(powers, clean)], length)
        rel = max(abs(fit.eta_max / 0.30 - 1), abs(fit.eta_nor / eta_nor - 1))
        assert rel <= 1e-8
        errs = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            y = clean + rng.normal(0, 0.02 * 0.30, powers.size)
            f = fit_efficiency_curve([EfficiencyCurvePoint(p, v, 0.006) for p, v in zip(powers, y)], length)
            errs.append(abs(f.eta_max - 0.30))
        assert max(errs) <= 0.01
        notes.append(f"noiseless relative error {rel:.1e}, worst noisy eta_max error {max(errs):.4f}")


def test_criterion_9_error_bar_calibration(configs):
    with criterion(9, "finite-difference error bar calibration", 600.0) as notes:
        cfg = configs["unconverted"]
        ref = run_cell(cfg, "total", seed=0)
        sigma_fd = ref.sigmas["fidelity"]
        # parametric bootstrap: fresh datasets drawn from the configured truth
        replicates = [
            run_cell(cfg, "total", seed=derive_seed(99, i), with_errors=False).fidelity for i in range(200)
        ]
        empirical = float(np.std(replicates, ddof=1))
        ratio = sigma_fd / empirical
        assert 0.5 <= ratio <= 1.5, f"finite-difference {sigma_fd:.5f} vs empirical {empirical:.5f}"
        assert 0.002 <= sigma_fd <= 0.005, f"sigma_F = {100 * sigma_fd:.3f}%"
        notes.append(
            f"sigma_F {100 * sigma_fd:.3f}% vs bootstrap spread {100 * empirical:.3f}% (ratio {ratio:.2f})"
        )
