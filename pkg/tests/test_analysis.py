import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gru_attitude import analysis
from gru_attitude.errors import EmptySeries, TooShort

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_rmse_examples():
    assert analysis.rmse(np.zeros(10)) == 0.0
    assert analysis.rmse(np.full(7, -2.5)) == 2.5
    assert analysis.rmse(np.array([3.0, 4.0])) == pytest.approx(np.sqrt(12.5), rel=1e-15)
    np.testing.assert_array_equal(analysis.rmse(np.array([[3.0, 0], [4.0, 0]])), [np.sqrt(12.5), 0])
    with pytest.raises(EmptySeries):
        analysis.rmse(np.array([]))


@given(arrays(float, (30, 2), elements=finite), arrays(float, (30, 2), elements=finite))
def test_rmse_triangle(a, b):
    assert np.all(analysis.rmse(a + b) <= analysis.rmse(a) + analysis.rmse(b) + 1e-9)


def test_box_stats_examples():
    s = analysis.box_stats([1, 2, 3, 4, 5])
    assert (s.median, s.q1, s.q3, s.iqr, s.min, s.max) == (3, 2, 4, 2, 1, 5)
    flat = analysis.box_stats([0.7] * 9)
    assert flat.iqr == 0 and flat.min == flat.max == 0.7
    with pytest.raises(EmptySeries):
        analysis.box_stats([])


@given(arrays(float, st.integers(1, 50), elements=finite), st.randoms())
def test_box_stats_ordering_and_permutation(x, rnd):
    s = analysis.box_stats(x)
    assert s.min <= s.q1 <= s.median <= s.q3 <= s.max and s.rmse >= 0
    y = list(x)
    rnd.shuffle(y)
    assert analysis.box_stats(y) == s


def test_psd_sinusoid_parseval_and_peak():
    n, dt, A = 4096, 1.0, 2.0
    f0 = 128 / (n * dt)
    t = np.arange(n) * dt
    spec = analysis.psd(A * np.sin(2 * np.pi * f0 * t), dt)
    df = spec.frequencies[1] - spec.frequencies[0]
    assert spec.psd.sum() * df == pytest.approx(A ** 2 / 2, rel=0.03)
    peak, freq = spec.peak()
    assert freq[0] == pytest.approx(f0)


def test_psd_white_noise_matches_variance():
    x = np.random.default_rng(42).standard_normal(8192) * 0.3
    spec = analysis.psd(x, 0.5)
    df = spec.frequencies[1] - spec.frequencies[0]
    assert spec.psd.sum() * df == pytest.approx(x.var(), rel=0.05)


def test_psd_constant_series_is_flat_zero():
    spec = analysis.psd(np.full(64, 3.3), 1.0)
    assert spec.psd.max() < 1e-25


def test_psd_frequency_grid_and_errors():
    spec = analysis.psd(np.random.default_rng(0).standard_normal((100, 6)), 2.0)
    f = spec.frequencies
    assert f[0] == 0 and f[-1] == pytest.approx(0.25) and np.all(np.diff(f) > 0)
    assert spec.psd.shape == (51, 6) and np.all(spec.psd >= 0)
    with pytest.raises(TooShort):
        analysis.psd(np.zeros(7), 1.0)


def planted(scales, n=256):
    t = np.arange(n)
    base = np.stack([np.sin(2 * np.pi * t / 64)] * 6, axis=1)
    return [s * base for s in scales]


def test_campaign_report_flags():
    rep = analysis.campaign_report(planted([1.0, 0.6, 0.3]), dt=1.0)
    assert rep.rmse_nonincreasing and rep.psd_peak_decreasing
    assert [it.iteration for it in rep.iterations] == [1, 2, 3]
    bad = analysis.campaign_report(planted([1.0, 1.04, 0.3]), dt=1.0)
    assert not bad.rmse_nonincreasing and bad.rmse_nonincreasing_with_allowance
    worse = analysis.campaign_report(planted([1.0, 1.2]), dt=1.0)
    assert not worse.rmse_nonincreasing_with_allowance and not worse.psd_peak_decreasing


def test_single_record_report():
    rep = analysis.campaign_report(planted([1.0]), dt=1.0)
    assert len(list(rep.rows())) == 6
    assert all(rep.flags.values())
    with pytest.raises(EmptySeries):
        analysis.campaign_report([])


def test_report_rows_match_direct_metrics():
    x = np.random.default_rng(3).standard_normal((300, 6))
    rep = analysis.campaign_report([x], dt=1.0)
    rows = list(rep.rows())
    assert [r["channel"] for r in rows] == list(analysis.CHANNELS)
    for c, row in enumerate(rows):
        assert row["rmse"] == pytest.approx(analysis.rmse(x[:, c]), rel=1e-14)
        assert row["median"] == np.median(x[:, c])
    assert rep.iterations[0].mean_attitude_rmse == pytest.approx(np.mean(analysis.rmse(x[:, :3])))
