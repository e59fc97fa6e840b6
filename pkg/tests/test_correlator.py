import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadekit import correlator as corr
from cascadekit.errors import ConfigurationError, ValidationError
from cascadekit.timetags import TimeTagStream


def stream(ts, duration=None, res=1, channel=0):
    ts = np.sort(np.unique(np.asarray(ts, dtype=np.int64)))
    dur = int(ts.max()) if duration is None and ts.size else (duration or 0)
    return TimeTagStream(ts, np.full(ts.size, channel), res, dur, channel + 1)


def poisson_stream(rng, rate, T):
    n = rng.poisson(rate * T)
    return stream(rng.integers(0, int(T), n), int(T))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        corr.CorrelationConfig(10, 105)
    with pytest.raises(ConfigurationError):
        corr.CorrelationConfig(0, 100)
    with pytest.raises(ConfigurationError):
        corr.CorrelationConfig(10, 100, period_ps=100.0, peak_window_ps=60.0)
    c = corr.CorrelationConfig(10, 100, period_ps=40.0)
    assert c.peak_window_ps == 20.0
    assert c.n_bins == 20 and c.mode == "pulsed"
    assert c.edges[10] == 0.0


def test_whole_float_widths_become_ints():
    c = corr.CorrelationConfig(250.0, 43750.0)
    assert c.bin_width_ps == 250 and isinstance(c.n_bins, int) and c.n_bins == 350
    with pytest.raises(ConfigurationError):
        corr.CorrelationConfig(2.5, 100.0)


def test_empty_streams_give_zero_histogram():
    cfg = corr.CorrelationConfig(10, 100)
    h = corr.cross_correlate(stream([]), stream([5, 9]), cfg)
    assert h.counts.sum() == 0 and h.counts.size == 20


def test_single_pair():
    cfg = corr.CorrelationConfig(10, 100)
    h = corr.cross_correlate(stream([0], 100), stream([50], 100), cfg)
    assert h.counts.sum() == 1
    assert h.counts[np.searchsorted(cfg.edges, 50, side="right") - 1] == 1
    assert cfg.edges[15] == 50.0 and h.counts[15] == 1


def test_window_is_half_open():
    cfg = corr.CorrelationConfig(10, 100)
    h = corr.cross_correlate(stream([1000], 2000), stream([900, 1100, 999, 1000], 2000), cfg)
    # -100 and 0 are lower edges and count; +100 is outside
    assert h.counts[0] == 1 and h.counts[10] == 1 and h.counts[9] == 1
    assert h.counts.sum() == 3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3000), max_size=80), st.lists(st.integers(0, 3000), max_size=80),
       st.integers(1, 50), st.integers(1, 20))
def test_sweep_matches_brute_force(a, b, bw, nb):
    cfg = corr.CorrelationConfig(bw, bw * nb)
    sa, sb = stream(a, 3000), stream(b, 3000)
    h = corr.cross_correlate(sa, sb, cfg)
    np.testing.assert_array_equal(h.counts, corr.brute_force_counts(sa.timestamps, sb.timestamps, cfg))


def test_auto_excludes_self_pairs():
    s = stream([0, 10, 30], 100)
    cfg = corr.CorrelationConfig(5, 50)
    h = corr.auto_correlate(s, cfg)
    np.testing.assert_array_equal(h.counts, corr.brute_force_counts(s.timestamps, s.timestamps,
                                                                    cfg, exclude_self=True))
    assert h.counts.sum() == 6


def test_time_reversal():
    rng = np.random.default_rng(3)
    # odd minus even delays never land on an even bin edge
    a = stream(2 * rng.integers(0, 50_000, 2000) + 1, 100_001)
    b = stream(2 * rng.integers(0, 50_000, 2000), 100_001)
    cfg = corr.CorrelationConfig(16, 1600)
    ab = corr.cross_correlate(a, b, cfg).counts
    ba = corr.cross_correlate(b, a, cfg).counts
    np.testing.assert_array_equal(ab, ba[::-1])


@pytest.mark.parametrize("parts", [2, 3, 7, 50])
def test_partitioned_sweep_is_identical(parts):
    rng = np.random.default_rng(parts)
    a, b = poisson_stream(rng, 1e-3, 1e7), poisson_stream(rng, 1e-3, 1e7)
    cfg = corr.CorrelationConfig(32, 3200)
    ref = corr.cross_correlate(a, b, cfg).counts
    np.testing.assert_array_equal(corr.cross_correlate(a, b, cfg, partitions=parts,
                                                       max_workers=4).counts, ref)


def test_resolution_mismatch():
    cfg = corr.CorrelationConfig(10, 100)
    with pytest.raises(ConfigurationError):
        corr.cross_correlate(stream([1], 10, res=1), stream([1], 10, res=2), cfg)


def test_coarse_resolution_histogram():
    cfg = corr.CorrelationConfig(100, 1000)
    h = corr.cross_correlate(stream([10], 100, res=10), stream([15], 100, res=10), cfg)
    assert h.counts[10] == 1  # 50 ps in bin [0, 100)


def test_independent_poisson_streams_are_flat():
    rng = np.random.default_rng(11)
    T = 1e9
    a, b = poisson_stream(rng, 1e-4, T), poisson_stream(rng, 1e-4, T)
    cfg = corr.CorrelationConfig(500, 10_000)
    h = corr.normalize_cw(corr.cross_correlate(a, b, cfg))
    assert abs(h.g2.mean() - 1.0) < 0.01


def test_hbt_on_poisson_is_flat_within_errors():
    rng = np.random.default_rng(12)
    s = poisson_stream(rng, 2e-4, 1e9)
    cfg = corr.CorrelationConfig(1000, 10_000)
    h = corr.normalize_cw(corr.auto_correlate_hbt(s, cfg, 5))
    assert np.all(np.abs(h.g2 - 1.0) <= 3 * h.g2_err)


def test_rate_doubling_leaves_g2_unchanged():
    rng = np.random.default_rng(13)
    cfg = corr.CorrelationConfig(1000, 10_000)
    means = []
    for r in (5e-5, 1e-4):
        a, b = poisson_stream(rng, r, 1e9), poisson_stream(rng, r, 1e9)
        h = corr.normalize_cw(corr.cross_correlate(a, b, cfg))
        means.append((h.g2.mean(), np.sqrt(np.sum(h.g2_err**2)) / h.g2.size))
    (m1, e1), (m2, e2) = means
    assert abs(m1 - m2) < 3 * np.hypot(e1, e2)


def test_hbt_is_deterministic():
    rng = np.random.default_rng(1)
    s = poisson_stream(rng, 1e-3, 1e6)
    cfg = corr.CorrelationConfig(10, 1000)
    a = corr.auto_correlate_hbt(s, cfg, 4).counts
    np.testing.assert_array_equal(a, corr.auto_correlate_hbt(s, cfg, 4).counts)
    assert corr.auto_correlate_hbt(stream([]), cfg, 4).counts.sum() == 0


def test_normalize_cw_formula_and_empty_bins():
    cfg = corr.CorrelationConfig(10, 20)
    h = corr.CorrelationHistogram(cfg, np.array([0, 4, 9, 1]), 100, 50, 1000.0)
    out = corr.normalize_cw(h)
    t_eff = 1000.0 - np.abs(cfg.centers)
    scale = 1.0 / (0.1 * 0.05 * 10 * t_eff)
    np.testing.assert_allclose(out.g2, h.counts * scale)
    np.testing.assert_allclose(out.g2_err, np.sqrt(h.counts) * scale)
    assert out.g2[0] == 0 and out.g2_err[0] == 0
    assert list(out.undefined_err) == [True, False, False, False]
    with pytest.raises(ValidationError):
        corr.normalize_cw(corr.CorrelationHistogram(cfg, np.zeros(4, int), 1, 1, 0.0))


def pulsed_hist(areas_by_k, period=100, bw=10, n_side=3):
    tau_max = bw * int(np.ceil((n_side + 0.5) * period / bw))
    cfg = corr.CorrelationConfig(bw, tau_max, period_ps=float(period), n_side_peaks=n_side)
    counts = np.zeros(cfg.n_bins, dtype=np.int64)
    for k, a in areas_by_k.items():
        counts[np.argmin(np.abs(cfg.centers - (k * period + bw / 2)))] = a
    return corr.CorrelationHistogram(cfg, counts, 1, 1, 1.0)


def test_pulsed_equal_peaks_and_empty_centre():
    equal = {k: 50 for k in range(-3, 4)}
    assert corr.normalize_pulsed(pulsed_hist(equal)).g2_zero == 1.0
    equal[0] = 0
    assert corr.normalize_pulsed(pulsed_hist(equal)).g2_zero == 0.0


def test_pulsed_needs_two_side_peaks_and_pulsed_mode():
    cfg = corr.CorrelationConfig(10, 100, period_ps=100.0)
    with pytest.raises(ConfigurationError):
        corr.normalize_pulsed(corr.CorrelationHistogram(cfg, np.zeros(cfg.n_bins, int), 1, 1, 1.0))
    cw = corr.CorrelationConfig(10, 100)
    with pytest.raises(ConfigurationError):
        corr.normalize_pulsed(corr.CorrelationHistogram(cw, np.zeros(cw.n_bins, int), 1, 1, 1.0))


def test_csv_and_json_round_trip():
    cfg = corr.CorrelationConfig(10, 30)
    h = corr.normalize_cw(corr.CorrelationHistogram(cfg, np.array([1, 2, 3, 4, 5, 6]), 10, 10, 1e3))
    lines = h.to_csv().splitlines()
    assert lines[0] == "tau_ps,counts,g2,g2_err"
    assert lines[1].startswith("-25,1,")
    back = corr.CorrelationHistogram.from_json(h.to_json())
    np.testing.assert_array_equal(back.counts, h.counts)
    np.testing.assert_allclose(back.g2, h.g2)
    assert back.config == cfg
    assert json.loads(h.to_json())["config"]["bin_width_ps"] == 10


def test_throughput():
    rng = np.random.default_rng(0)
    a, b = poisson_stream(rng, 1e-3, 2e9), poisson_stream(rng, 1e-3, 2e9)
    cfg = corr.CorrelationConfig(16, 1600)
    corr.cross_correlate(a, b, cfg)  # compile
    t0 = time.perf_counter()
    corr.cross_correlate(a, b, cfg)
    rate = (len(a) + len(b)) / (time.perf_counter() - t0)
    assert rate > 1e7
