import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionphoton.budget import (
    CONVERTER_H_ARM,
    CONVERTER_V_ARM,
    BudgetError,
    CurveFitError,
    EfficiencyChain,
    EfficiencyCurvePoint,
    background_budget,
    chain_product,
    compare,
    corrected_totals,
    eta_ext,
    fit_efficiency_curve,
    rate_budget,
    sbr,
    subtract_background,
    working_point,
)
from ionphoton.budget.curve import first_maximum_power
from ionphoton.config import Measured
from ionphoton.simulation import expected_histograms, simulate, simulate_setting
from ionphoton.simulation.channel import build_true_state
from ionphoton.tomography import all_settings

LENGTH = 0.04

factors = st.lists(
    st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 0.01)),
    min_size=1,
    max_size=8,
)


def _chain(pairs):
    return EfficiencyChain([(f"f{i}", v, s) for i, (v, s) in enumerate(pairs)])


def _points(eta_max, peak, rng=None, noise=0.0, n=15):
    eta_nor = first_maximum_power(1.0, LENGTH) / peak
    powers = np.linspace(0.05, 1.1 * peak, n)
    y = eta_ext(powers, eta_max, eta_nor, LENGTH)
    sig = max(noise, 1e-3) * eta_max
    if noise:
        y = y + rng.normal(0, noise * eta_max, n)
    return [EfficiencyCurvePoint(float(p), float(v), sig) for p, v in zip(powers, y)], eta_nor


def test_converter_arm_products():
    assert chain_product(CONVERTER_H_ARM)[0] == pytest.approx(0.265, abs=0.002)
    assert chain_product(CONVERTER_V_ARM)[0] == pytest.approx(0.266, abs=0.002)
    assert chain_product(EfficiencyChain([("one", 1.0, None)])) == (1.0, 0.0)


def test_chain_errors():
    with pytest.raises(BudgetError):
        chain_product(EfficiencyChain([]))
    with pytest.raises(BudgetError):
        EfficiencyChain([("bad", 1.2, None)])
    value, sigma = chain_product(EfficiencyChain([("a", 0.5, 0.01), ("b", 0.4, 0.02)]))
    assert value == pytest.approx(0.2)
    assert sigma == pytest.approx(0.2 * math.hypot(0.02, 0.05))


@settings(max_examples=60, deadline=None)
@given(factors, st.randoms(use_true_random=False), st.integers(0, 8))
def test_chain_order_and_grouping(pairs, rnd, cut):
    value, sigma = chain_product(_chain(pairs))
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    v2, s2 = chain_product(_chain(shuffled))
    assert v2 == pytest.approx(value, rel=1e-12)
    assert s2 == pytest.approx(sigma, rel=1e-9, abs=1e-15)
    cut = min(cut, len(pairs))
    if 0 < cut < len(pairs):
        a = chain_product(_chain(pairs[:cut]))
        b = chain_product(_chain(pairs[cut:]))
        v3, s3 = chain_product(_chain([a, b]))
        assert v3 == pytest.approx(value, rel=1e-12)
        assert s3 == pytest.approx(sigma, rel=1e-9, abs=1e-15)


def test_eta_ext_examples():
    assert eta_ext(0.0, 0.3, 2.0, LENGTH) == 0.0
    p = first_maximum_power(2.0, LENGTH)
    assert math.sqrt(2.0 * p) * LENGTH == pytest.approx(math.pi / 2)
    assert eta_ext(p, 0.3, 2.0, LENGTH) == pytest.approx(0.3, rel=1e-15)
    with pytest.raises(BudgetError):
        eta_ext(-1.0, 0.3, 2.0, LENGTH)


@given(st.floats(0, 50), st.floats(0.01, 1), st.floats(1, 1e4))
def test_eta_ext_bounded(p, eta_max, eta_nor):
    assert 0.0 <= eta_ext(p, eta_max, eta_nor, LENGTH) <= eta_max


def test_noiseless_fit():
    pts, eta_nor = _points(0.30, 0.8)
    fit = fit_efficiency_curve(pts, LENGTH)
    assert fit.eta_max == pytest.approx(0.30, rel=1e-8)
    assert fit.eta_nor == pytest.approx(eta_nor, rel=1e-8)
    assert fit.chi2 < 1e-12
    assert fit.peak_power == pytest.approx(0.8, rel=1e-8)


def test_noisy_fit():
    rng = np.random.default_rng(8)
    fit = fit_efficiency_curve(_points(0.30, 0.8, rng, 0.02)[0], LENGTH)
    assert fit.eta_max == pytest.approx(0.30, abs=0.01)
    assert fit.dof == 13
    assert fit.sigma[0] < 0.01


def test_working_point_bisection_oracle():
    a = fit_efficiency_curve(_points(0.30, 0.7)[0], LENGTH)
    b = fit_efficiency_curve(_points(0.30, 1.1)[0], LENGTH)
    p, eff = working_point(a, b)
    lo, hi = 0.7, 1.1
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (a(lo) - b(lo)) * (a(mid) - b(mid)) <= 0:
            hi = mid
        else:
            lo = mid
    assert p == pytest.approx(0.5 * (lo + hi), abs=1e-10)
    assert eff == pytest.approx(b(p), abs=1e-12)
    assert max(a(1.1), b(0.7)) <= eff <= 0.30


def test_degenerate_curve_data():
    pts = [EfficiencyCurvePoint(0.5, 0.1 + 0.01 * i, 0.01) for i in range(6)]
    with pytest.raises(CurveFitError):
        fit_efficiency_curve(pts, LENGTH)
    with pytest.raises(CurveFitError):
        fit_efficiency_curve(_points(0.3, 0.8)[0][:3], LENGTH)
    with pytest.raises(BudgetError):
        EfficiencyCurvePoint(-0.1, 0.1, 0.01)


def test_sbr_examples():
    assert sbr(114200, 3868) == pytest.approx(29.5, abs=0.05)
    assert sbr(193120, 7953) == pytest.approx(24.3, abs=0.05)
    assert sbr(5, 5) == 1.0
    assert math.isinf(sbr(5, 0))


def test_rate_budget_unconverted(configs):
    rep = rate_budget(configs["unconverted"])
    assert rep.detected_rate == pytest.approx(114200 / 4132, rel=1e-12)
    assert rep.detected_rate == pytest.approx(27.64, abs=0.005)
    assert rep.generated_rate == pytest.approx(236, rel=0.005)
    assert rep.theoretical_generated_rate == pytest.approx(238, rel=0.005)
    assert rep.background_events == pytest.approx(3803, rel=0.005)
    assert rep.sbr == pytest.approx(29.5, rel=0.005)
    assert rep.flags == []


def test_rate_budget_converted(configs):
    rep = rate_budget(configs["converted"])
    assert rep.detected_rate == pytest.approx(24.8, rel=0.005)
    assert rep.generated_rate == pytest.approx(43.5, rel=0.005)
    assert rep.generated_rate_sigma == pytest.approx(1.4, rel=0.1)
    assert rep.effective_dark_rates == pytest.approx([62.7, 59.9], rel=0.005)
    assert rep.background_events == pytest.approx(7935, rel=0.005)
    assert rep.sbr == pytest.approx(24.3, rel=0.005)
    cmp = compare(rate_budget(configs["unconverted"]), rep)
    assert cmp["efficiency_ratio"] == pytest.approx(0.427, rel=0.005)
    assert cmp["efficiency_ratio_sigma"] == pytest.approx(0.015, rel=0.2)
    assert cmp["background_reduction"] == pytest.approx(0.52, abs=0.005)


def test_rate_budget_zero_efficiency(configs):
    with pytest.raises(BudgetError):
        rate_budget(replace(configs["unconverted"], analyzer_transmission=0.0))


def test_background_budget_examples(configs):
    value, _ = background_budget(configs["unconverted"])
    assert value == pytest.approx(3803, rel=0.005)
    value, sigma = background_budget(configs["converted"])
    assert value == pytest.approx(7935, rel=0.005)
    assert sigma > math.sqrt(value)
    cfg = replace(configs["unconverted"], dark_count_rates=[0.0])
    assert background_budget(cfg) == (0.0, 0.0)


def _dark_only(config):
    return replace(config, collection_halo=0.0)


@pytest.mark.parametrize("name", ["unconverted", "converted"])
def test_background_matches_simulator(configs, name):
    cfg = _dark_only(configs[name])
    expected, _ = background_budget(cfg)
    z = []
    for seed in range(20):
        hs = simulate(cfg, seed=seed)
        total = sum(h.windowed()[0] for h in hs)
        z.append((total - expected) / math.sqrt(expected))
    # pooled over the 20 seeds the total must sit within 3 sigma of its own spread
    assert abs(np.sum(z)) / math.sqrt(20) < 3, z
    assert np.all(np.abs(z) < 4), z


def test_rate_budget_self_consistency(configs):
    cfg = configs["unconverted"]
    hs = simulate(cfg, seed=5)
    bg, _ = background_budget(cfg)
    realized = sum(h.windowed()[0] for h in hs)
    rep = rate_budget(cfg, Measured(signal_events=realized - bg, duration=cfg.acquisition_duration))
    sigma = math.hypot(rep.generated_rate_sigma, rep.generated_rate * math.sqrt(2 * bg) / realized)
    assert abs(rep.generated_rate - rep.theoretical_generated_rate) < 3 * sigma


def test_subtraction_fraction_zero_is_identity(configs):
    hs = simulate(configs["unconverted"], seed=2, duration_scale=0.2)
    out = subtract_background(hs, 0.0)
    for a, b in zip(hs, out):
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.counts, b.variances)


def test_subtraction_of_flat_dark(configs):
    hs = simulate(_dark_only(configs["converted"]), seed=3)
    totals = corrected_totals(subtract_background(hs, "total"))
    z = np.array([m / math.sqrt(v) for m, v in totals.values()])
    assert np.all(np.abs(z) < 3.5)
    assert abs(z.mean()) < 3 / math.sqrt(len(z))


def test_subtraction_modes(configs):
    hs = simulate(configs["converted"], seed=4, duration_scale=0.2)
    none = sum(h.windowed()[0] for h in subtract_background(hs, "none"))
    det = sum(h.windowed()[0] for h in subtract_background(hs, "detector-only"))
    tot = sum(h.windowed()[0] for h in subtract_background(hs, "total"))
    assert none > det > tot
    assert (none - det) == pytest.approx(0.935 * (none - tot), rel=1e-9)
    with pytest.raises(BudgetError):
        subtract_background(hs, "partial")
    with pytest.raises(BudgetError):
        subtract_background(hs, 1.5)


def test_subtraction_rate_independent_of_duration(configs):
    cfg = configs["unconverted"]
    truth = build_true_state(cfg)
    s = all_settings()[0]
    rates = []
    for scale in (1.0, 2.0):
        hs = [simulate_setting(cfg, t, cfg.setting_duration * scale, truth, i, seed=7) for i, t in enumerate(all_settings())]
        h = subtract_background(hs, 1.0)[0]
        assert h.setting == s
        m, v = h.windowed()
        rates.append((m / h.duration, math.sqrt(v) / h.duration))
    (r1, s1), (r2, s2) = rates
    assert abs(r1 - r2) < 3 * math.hypot(s1, s2)


def test_expected_dark_matches_budget(configs):
    for name in ("unconverted", "converted"):
        cfg = _dark_only(configs[name])
        hs = expected_histograms(cfg)
        assert sum(h.windowed()[0] for h in hs) == pytest.approx(background_budget(cfg)[0], rel=1e-9)
