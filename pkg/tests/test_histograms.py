import numpy as np
import pytest

from ionphoton.tomography import (
    BasisSetting,
    CoincidenceHistogram,
    HistogramError,
    all_settings,
    check_complete,
    load_histograms,
    save_histograms,
)


def _hist(setting, counts=None):
    counts = np.arange(400) % 7 if counts is None else counts
    return CoincidenceHistogram(setting, 10e-9, counts, 2e-6, 2.3e-6, 100.0)


def test_thirty_six_distinct_projectors():
    settings = all_settings()
    assert len(set(settings)) == 36
    projs = {s.projector().round(12).tobytes() for s in settings}
    assert len(projs) == 36


def test_label_round_trip():
    for s in all_settings():
        assert BasisSetting.parse(s.label) == s
        assert BasisSetting.from_json(s.to_json()) == s


def test_window_masks():
    h = _hist(all_settings()[0])
    assert h.window_mask().sum() == 30
    assert h.background_mask().sum() == 200
    assert not np.any(h.window_mask() & h.background_mask())


def test_invalid_histograms():
    s = all_settings()[0]
    with pytest.raises(HistogramError):
        CoincidenceHistogram(s, 10e-9, np.ones(10), 2e-6, 2.3e-6, 1.0)
    with pytest.raises(HistogramError):
        CoincidenceHistogram(s, 10e-9, -np.ones(400), 2e-6, 2.3e-6, 1.0)
    with pytest.raises(HistogramError):
        BasisSetting("w", 1, "z", 1)


def test_completeness_checks():
    hs = [_hist(s) for s in all_settings()]
    assert len(check_complete(hs)) == 36
    with pytest.raises(HistogramError, match="missing"):
        check_complete(hs[:-1])
    with pytest.raises(HistogramError, match="duplicate"):
        check_complete(hs + hs[:1])


def test_json_round_trip(tmp_path):
    hs = [_hist(s) for s in all_settings()]
    hs[3] = CoincidenceHistogram(
        hs[3].setting, 10e-9, np.linspace(-1, 3, 400), 2e-6, 2.3e-6, 5.0, variances=np.ones(400), background=np.full(400, 0.5)
    )
    path = tmp_path / "h.json"
    save_histograms(hs, path)
    back = load_histograms(path)
    for a, b in zip(hs, back):
        assert a.setting == b.setting
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.var, b.var) and np.array_equal(a.bkg, b.bkg)
        assert a.window_start == pytest.approx(b.window_start, rel=1e-15)
