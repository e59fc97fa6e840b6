"""
Coincidence histograms of time-tag streams.

The histogram of delays ``tau = t_stop - t_start`` is built with a two-pointer
sweep over the sorted streams: the lower pointer into ``stop`` only ever moves
forward, so the cost is O(n + m + coincidences).  Bins are half-open
``[lo, hi)`` and ``tau = 0`` is a bin edge.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np

from .cascade_mc import split_stream
from .errors import ConfigurationError, ValidationError
from .timetags import TimeTagStream

__all__ = [
    "CorrelationConfig",
    "CorrelationHistogram",
    "PulsedG2",
    "cross_correlate",
    "auto_correlate",
    "auto_correlate_hbt",
    "brute_force_counts",
    "normalize_cw",
    "normalize_pulsed",
]


@dataclass(frozen=True)
class CorrelationConfig:
    """Histogram geometry and normalisation mode.

    Setting ``period_ps`` selects pulsed normalisation.  ``peak_window_ps``
    is the full integration width around each peak (default ``period / 2``).
    """

    bin_width_ps: int
    tau_max_ps: int
    period_ps: float | None = None
    peak_window_ps: float | None = None
    n_side_peaks: int = 10

    def __post_init__(self):
        for name in ("bin_width_ps", "tau_max_ps"):
            v = getattr(self, name)
            if isinstance(v, float):
                # configs parsed from JSON carry whole numbers as floats
                if not v.is_integer():
                    raise ConfigurationError(f"{name} must be a whole number of picoseconds")
                object.__setattr__(self, name, int(v))
        if not self.bin_width_ps > 0 or not self.tau_max_ps > 0:
            raise ConfigurationError("bin_width and tau_max must be positive")
        if self.tau_max_ps % self.bin_width_ps:
            raise ConfigurationError("tau_max must be a multiple of bin_width")
        if self.period_ps is not None:
            if not self.period_ps > 0:
                raise ConfigurationError("period must be positive")
            if self.peak_window_ps is None:
                object.__setattr__(self, "peak_window_ps", self.period_ps / 2)
            if not 0 < self.peak_window_ps <= self.period_ps / 2:
                raise ConfigurationError("peak_window must be in (0, period/2]")
            if self.n_side_peaks < 1:
                raise ConfigurationError("n_side_peaks must be >= 1")

    @property
    def mode(self) -> str:
        return "cw" if self.period_ps is None else "pulsed"

    @property
    def n_bins(self) -> int:
        return 2 * self.tau_max_ps // self.bin_width_ps

    @property
    def edges(self) -> np.ndarray:
        return (np.arange(self.n_bins + 1) * self.bin_width_ps
                - self.tau_max_ps).astype(float)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


@dataclass
class CorrelationHistogram:
    config: CorrelationConfig
    counts: np.ndarray
    n_start: int
    n_stop: int
    duration_ps: float
    g2: np.ndarray | None = None
    g2_err: np.ndarray | None = None
    undefined_err: np.ndarray | None = None
    channels: dict = field(default_factory=dict)

    @property
    def tau(self) -> np.ndarray:
        return self.config.centers

    def to_csv(self) -> str:
        cols = [self.tau, self.counts]
        header = "tau_ps,counts"
        fmt = ["%.6g", "%d"]
        if self.g2 is not None:
            cols += [self.g2, self.g2_err]
            header += ",g2,g2_err"
            fmt += ["%.10g", "%.10g"]
        lines = [header]
        for row in zip(*cols):
            lines.append(",".join(f % v for f, v in zip(fmt, row)))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "config": asdict(self.config),
            "n_start": self.n_start,
            "n_stop": self.n_stop,
            "duration_ps": self.duration_ps,
            "channels": self.channels,
            "tau_ps": self.tau.tolist(),
            "counts": self.counts.tolist(),
        }
        if self.g2 is not None:
            doc["g2"] = self.g2.tolist()
            doc["g2_err"] = self.g2_err.tolist()
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CorrelationHistogram":
        doc = json.loads(text)
        h = cls(CorrelationConfig(**doc["config"]),
                np.asarray(doc["counts"], dtype=np.int64), doc["n_start"],
                doc["n_stop"], doc["duration_ps"], channels=doc.get("channels", {}))
        if "g2" in doc:
            h.g2 = np.asarray(doc["g2"], float)
            h.g2_err = np.asarray(doc["g2_err"], float)
        return h


@numba.njit(cache=True, nogil=True)
def _sweep(start, stop, i0, i1, lo, tau_max, bin_width, exclude_self, counts):
    m = stop.shape[0]
    for i in range(i0, i1):
        s = start[i]
        while lo < m and stop[lo] < s - tau_max:
            lo += 1
        j = lo
        while j < m and stop[j] < s + tau_max:
            if not (exclude_self and j == i):
                counts[(stop[j] - s + tau_max) // bin_width] += 1
            j += 1


def brute_force_counts(start_ps, stop_ps, config: CorrelationConfig,
                       exclude_self: bool = False) -> np.ndarray:
    """Reference O(n*m) histogram used to validate the sweep."""
    start_ps = np.asarray(start_ps, dtype=np.int64)
    stop_ps = np.asarray(stop_ps, dtype=np.int64)
    counts = np.zeros(config.n_bins, dtype=np.int64)
    tm, bw = config.tau_max_ps, config.bin_width_ps
    rows = max(1, 2_000_000 // max(stop_ps.size, 1))
    cols = np.arange(stop_ps.size)
    for i0 in range(0, start_ps.size, rows):
        d = stop_ps[None, :] - start_ps[i0:i0 + rows, None]
        keep = (d >= -tm) & (d < tm)
        if exclude_self:
            keep &= cols[None, :] != np.arange(i0, i0 + d.shape[0])[:, None]
        counts += np.bincount((d[keep] + tm) // bw, minlength=config.n_bins)
    return counts


def cross_correlate(start: TimeTagStream, stop: TimeTagStream,
                    config: CorrelationConfig, partitions: int = 1,
                    max_workers: int | None = None) -> CorrelationHistogram:
    """Exact coincidence histogram of ``stop - start`` delays.

    Passing the same stream object twice correlates it with itself and skips
    the self-pairs.  ``partitions > 1`` splits the start tags into contiguous
    ranges histogrammed concurrently and summed bin-wise; the result is
    identical to the single-pass sweep.
    """
    if start.resolution_ps != stop.resolution_ps:
        raise ConfigurationError("streams have different resolutions")
    res = start.resolution_ps
    if config.bin_width_ps % res or config.tau_max_ps % res:
        raise ConfigurationError("bin width and tau_max must be multiples of the resolution")
    exclude_self = start is stop
    a = start.timestamps.astype(np.int64)
    b = stop.timestamps.astype(np.int64)
    bw, tm = config.bin_width_ps // res, config.tau_max_ps // res
    bounds = np.linspace(0, a.size, max(1, int(partitions)) + 1).astype(np.int64)

    def run(k):
        c = np.zeros(config.n_bins, dtype=np.int64)
        if a.size and b.size:
            i0, i1 = bounds[k], bounds[k + 1]
            if i1 > i0:
                lo = np.searchsorted(b, a[i0] - tm, side="left")
                _sweep(a, b, i0, i1, lo, tm, bw, exclude_self, c)
        return c

    if len(bounds) == 2:
        counts = run(0)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            parts = list(pool.map(run, range(len(bounds) - 1)))
        counts = np.sum(parts, axis=0)
    duration = max(start.duration_ps, stop.duration_ps)
    return CorrelationHistogram(config, counts, len(start), len(stop), float(duration))


def auto_correlate(stream: TimeTagStream, config: CorrelationConfig) -> CorrelationHistogram:
    """Direct autocorrelation of one stream, self-pairs excluded."""
    return cross_correlate(stream, stream, config)


def auto_correlate_hbt(stream: TimeTagStream, config: CorrelationConfig,
                       seed) -> CorrelationHistogram:
    """Autocorrelation through a simulated 50:50 beam splitter.

    The two arms each receive about half the photons, as in a physical
    Hanbury Brown-Twiss setup.
    """
    arm1, arm2 = split_stream(stream, 0.5, seed)
    return cross_correlate(arm1, arm2, config)


def normalize_cw(hist: CorrelationHistogram) -> CorrelationHistogram:
    """Fill ``g2`` with the Poisson-normalised coincidence rate.

    ``g2 = counts / (r1 r2 bin_width (T - |tau|))`` with ``r = N / T``.
    Errors are ``sqrt(counts)`` scaled the same way; empty bins get
    ``g2 = 0`` with a zero error and are flagged in ``undefined_err``.
    """
    cfg = hist.config
    T = float(hist.duration_ps)
    if T <= 0:
        raise ValidationError("histogram has no acquisition duration")
    out = replace(hist)
    if hist.n_start == 0 or hist.n_stop == 0:
        out.g2 = np.zeros(cfg.n_bins)
        out.g2_err = np.zeros(cfg.n_bins)
        out.undefined_err = np.ones(cfg.n_bins, dtype=bool)
        return out
    r1, r2 = hist.n_start / T, hist.n_stop / T
    t_eff = T - np.abs(cfg.centers)
    scale = 1.0 / (r1 * r2 * cfg.bin_width_ps * t_eff)
    counts = hist.counts.astype(float)
    out.g2 = counts * scale
    out.g2_err = np.sqrt(counts) * scale
    out.undefined_err = hist.counts == 0
    return out


@dataclass(frozen=True)
class PulsedG2:
    g2_zero: float
    g2_zero_err: float
    areas: dict  # peak index k -> integrated counts


def normalize_pulsed(hist: CorrelationHistogram) -> PulsedG2:
    """Zero-delay peak area divided by the mean side-peak area.

    Counts are integrated over bins whose centres lie within
    ``peak_window / 2`` of ``k * period``.  Side peaks ``k = +-1 .. +-n``
    are used when they fit inside the histogram.
    """
    cfg = hist.config
    if cfg.mode != "pulsed":
        raise ConfigurationError("normalize_pulsed needs a pulsed config")
    centers = cfg.centers
    half = cfg.peak_window_ps / 2
    reach = cfg.tau_max_ps - half
    ks = [k for k in range(-cfg.n_side_peaks, cfg.n_side_peaks + 1)
          if abs(k) * cfg.period_ps <= reach + 1e-9]
    side = [k for k in ks if k != 0]
    if len(side) < 2:
        raise ConfigurationError("fewer than 2 side peaks inside the histogram window")
    areas = {}
    for k in ks:
        sel = np.abs(centers - k * cfg.period_ps) < half
        areas[k] = int(hist.counts[sel].sum())
    side_mean = np.mean([areas[k] for k in side])
    if side_mean == 0:
        return PulsedG2(float("nan"), float("nan"), areas)
    c0 = areas[0]
    g = c0 / side_mean
    # Poisson propagation; an empty centre peak counts as one event
    err = np.sqrt(max(c0, 1) / side_mean**2 + g**2 / (side_mean * len(side)))
    return PulsedG2(float(g), float(err), areas)
