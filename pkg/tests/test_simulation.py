from dataclasses import replace

import numpy as np
import pytest

from ionphoton.config import ConverterConfig, ExperimentConfig, ProcessChannel
from ionphoton.measurement import binned_operators
from ionphoton.quantum import (
    DensityMatrix,
    bell_fidelity,
    fidelity,
    ideal_state,
    max_fidelity_for_purity,
    purity,
    random_density_matrix,
    werner_p_for_purity,
)
from ionphoton.simulation import (
    TrueState,
    apply_converter_channel,
    build_true_state,
    detection_probability_chain,
    expected_histograms,
    simulate,
    simulate_setting,
)
from ionphoton.simulation.simulate import _photon_probability, histogram_edges
from ionphoton.tomography import BasisSetting, all_settings
from ionphoton.wavepacket import wavepacket_sampler


def _windowed(hs):
    return {h.setting: h.windowed()[0] for h in hs}


def test_true_state_examples():
    t = build_true_state(ExperimentConfig())
    assert fidelity(t.rho_true, ideal_state(2 / 3)) == pytest.approx(1.0)
    p = werner_p_for_purity(0.967)
    t = build_true_state(ExperimentConfig(depolarization_p=p))
    F = fidelity(t.rho_true, t.target)
    assert purity(t.rho_true) == pytest.approx(0.967, abs=1e-12)
    assert F == pytest.approx(0.983, abs=5e-4)
    assert F == pytest.approx(max_fidelity_for_purity(0.967), abs=1e-3)
    t = build_true_state(ExperimentConfig(carving=True))
    assert bell_fidelity(t.rho_true)[0] == pytest.approx(1.0)


def test_detection_chain_rates(configs):
    assert detection_probability_chain(configs["unconverted"]).generated_rate == pytest.approx(238, abs=0.5)
    assert round(detection_probability_chain(configs["converted"]).generated_rate) == 44
    ones = ExperimentConfig(
        collection_halo=1.0,
        fiber_coupling=1.0,
        mixture_fraction_wanted=1.0,
        branching_854=1.0,
        wavepacket_window_fraction=1.0,
    )
    assert detection_probability_chain(ones).generated_probability == 1.0


def test_deterministic_and_order_independent(configs):
    cfg = configs["converted"]
    a = simulate(cfg, seed=7, duration_scale=0.05)
    b = simulate(cfg, seed=7, duration_scale=0.05)
    assert all(np.array_equal(x.counts, y.counts) for x, y in zip(a, b))
    subset = [(s, cfg.setting_duration * 0.05) for s in reversed(all_settings()[:5])]
    c = {h.setting: h.counts for h in simulate(cfg, subset, seed=7)}
    for h in a[:5]:
        assert np.array_equal(c[h.setting], h.counts)


def test_cgc_population_ratio():
    cfg = ExperimentConfig(dark_count_rates=[0.0], acquisition_duration=20000)
    w = _windowed(simulate(cfg, seed=3))
    n_r = w[BasisSetting("z", 1, "z", 1)]
    n_l = w[BasisSetting("z", -1, "z", -1)]
    # n_r - 2 n_l has variance n_r + 4 n_l
    assert abs(n_r - 2 * n_l) <= 3 * np.sqrt(n_r + 4 * n_l)


def test_fully_depolarized_is_uniform():
    cfg = ExperimentConfig(depolarization_p=1.0, acquisition_duration=20000)
    counts = np.array(list(_windowed(simulate(cfg, seed=4)).values()))
    chi2 = np.sum((counts - counts.mean()) ** 2 / counts.mean())
    # 35 dof: 99.9% quantile is about 66.6
    assert chi2 < 66.6


def test_full_scale_signal_and_background(configs):
    cfg = configs["unconverted"]
    exp = expected_histograms(cfg, dark=False)
    signal = sum(_windowed(exp).values())
    assert abs(signal - 114_200) <= 3 * np.sqrt(114_200)
    realized = sum(_windowed(simulate(cfg, seed=0)).values())
    dark_only = replace(cfg, collection_halo=0.0)
    bg = sum(_windowed(simulate(dark_only, seed=0)).values())
    assert abs(realized - bg - signal) <= 3 * np.sqrt(signal + 2 * bg)
    assert abs(bg - 3_868) <= 3 * np.sqrt(3_868)


def test_marginals_converge_to_projector_probabilities():
    cfg = ExperimentConfig(dark_count_rates=[0.0])
    rng = np.random.default_rng(11)
    wp = wavepacket_sampler(cfg)
    edges = histogram_edges(cfg)
    weights = wp.bin_weights(edges)
    phasors = wp.bin_phasors(edges, cfg.larmor_frequency, cfg.window_start)
    settings = all_settings()
    duration = 2000.0
    n_acc = cfg.repetition_rate * duration * cfg.mixture_fraction_wanted * cfg.branching_854
    n_photons = n_acc * _photon_probability(cfg)
    for trial in range(50):
        rho = random_density_matrix(rng)
        truth = TrueState(rho, rho, ideal_state(0.5), 0.5)
        s = settings[rng.integers(36)]
        h = simulate_setting(cfg, s, duration, truth, index=trial, seed=100 + trial, wavepacket=wp)
        p_true = np.einsum("kab,ba->", binned_operators(s, weights, phasors), rho.matrix).real
        assert abs(h.counts.sum() / n_photons - p_true) <= 3 / np.sqrt(n_photons)


def test_signal_rate_matches_chain(configs):
    cfg = replace(configs["unconverted"], dark_count_rates=[0.0])
    total = sum(_windowed(simulate(cfg, seed=5)).values())
    predicted = detection_probability_chain(cfg).detected_rate * cfg.acquisition_duration
    assert abs(total - predicted) <= 3 * np.sqrt(predicted)


def test_carving_equalizes_populations():
    cfg = ExperimentConfig(carving=True, dark_count_rates=[0.0], acquisition_duration=20000)
    w = _windowed(simulate(cfg, seed=6))
    a, b = w[BasisSetting("z", 1, "z", 1)], w[BasisSetting("z", -1, "z", -1)]
    assert abs(a - b) <= 3 * np.sqrt(a + b)


def test_converter_channel_examples():
    rho = DensityMatrix.from_pure(ideal_state(2 / 3))
    same = apply_converter_channel(rho, ProcessChannel())
    assert np.allclose(same.matrix, rho.matrix, atol=1e-14)
    # photon depolarization with process fidelity 0.9975
    ch = ProcessChannel(depolarization_p=4 / 3 * (1 - 0.9975))
    out = apply_converter_channel(rho, ConverterConfig(process_channel=ch))
    assert 0 < 1 - fidelity(out, ideal_state(2 / 3)) <= 0.004
    carved = apply_converter_channel(rho, ProcessChannel(arm_imbalance=0.5))
    assert carved.matrix[0, 0].real == pytest.approx(carved.matrix[3, 3].real, abs=1e-14)
