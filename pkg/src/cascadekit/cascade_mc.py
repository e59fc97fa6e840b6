"""
Kinetic Monte Carlo of the ground / exciton / biexciton cascade.

The emitter is a continuous-time Markov chain on the levels G, X and XX.
Pumping moves G -> X and X -> XX; radiative decay XX -> X emits a photon on the
biexciton line and X -> G a photon on the exciton line.  Trajectories are
sampled exactly, one transition at a time (Gillespie's direct method), and the
ideal emission record is then passed through a per-line detector model.

An optional slow branch shelves a freshly populated X or XX level with a fixed
probability; the shelved level emits on the same line at ``slow_rate``.  This
is a phenomenological stand-in for the nanosecond tails seen in measured
transients.

Random numbers come from numpy's PCG64 driven by a :class:`numpy.random.SeedSequence`.
Every component (emitter chain, each detector, each detector sub-process) owns
a child sequence with a fixed spawn key, so enabling dark counts on one detector
does not perturb the emitter trajectory or the other detector.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numba
import numpy as np

from .errors import ValidationError
from .timetags import TimeTagStream

__all__ = [
    "CW",
    "Pulsed",
    "SlowBranch",
    "EmitterModel",
    "DetectorModel",
    "IdealEmission",
    "XX_LINE",
    "X_LINE",
    "simulate_ideal",
    "simulate",
    "simulate_batch",
    "apply_detector",
    "split_stream",
    "seed_sequence",
]

XX_LINE = 0
X_LINE = 1
LINES = {"xx": XX_LINE, "x": X_LINE}

# spawn keys of the independent random sub-streams
_KEY_EMITTER = 0
_KEY_DETECTOR = {XX_LINE: 1, X_LINE: 2}
_KEY_SPLIT = 3

_G, _X, _XX, _XS, _XXS = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class CW:
    """Continuous-wave pumping at ``pump_rate`` (1/ps) on G->X and X->XX.

    ``pump_rate_xx`` overrides the X->XX rate when given.
    """

    pump_rate: float
    pump_rate_xx: float | None = None

    def __post_init__(self):
        if not self.pump_rate > 0:
            raise ValidationError("pump_rate must be > 0")
        if self.pump_rate_xx is not None and not self.pump_rate_xx > 0:
            raise ValidationError("pump_rate_xx must be > 0")

    @property
    def rate_xx(self) -> float:
        return self.pump_rate if self.pump_rate_xx is None else self.pump_rate_xx


@dataclass(frozen=True)
class Pulsed:
    """Instantaneous capture at pulse times ``k * period_ps``.

    At each pulse an empty emitter is captured into X with probability
    ``capture_probability``; an (unshelved) exciton present right after that
    step is promoted to XX with the same probability.
    """

    period_ps: float
    capture_probability: float

    def __post_init__(self):
        if not self.period_ps > 0:
            raise ValidationError("period_ps must be > 0")
        if not 0.0 <= self.capture_probability <= 1.0:
            raise ValidationError("capture_probability must be in [0, 1]")


@dataclass(frozen=True)
class SlowBranch:
    probability: float
    slow_rate: float

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValidationError("slow branch probability must be in [0, 1]")
        if not self.slow_rate > 0:
            raise ValidationError("slow_rate must be > 0")


@dataclass(frozen=True)
class EmitterModel:
    """Cascade rates (1/ps) and excitation.

    Defaults are the fast lifetimes 106 ps (XX) and 142 ps (X).
    """

    pump: CW | Pulsed
    gamma_xx: float = 1.0 / 106.0
    gamma_x: float = 1.0 / 142.0
    slow_branch: SlowBranch | None = None

    def __post_init__(self):
        if not (self.gamma_xx > 0 and self.gamma_x > 0):
            raise ValidationError("decay rates must be > 0")
        if not isinstance(self.pump, (CW, Pulsed)):
            raise ValidationError("pump must be CW or Pulsed")

    @property
    def slowest_time_ps(self) -> float:
        rates = [self.gamma_xx, self.gamma_x]
        if self.slow_branch is not None and self.slow_branch.probability > 0:
            rates.append(self.slow_branch.slow_rate)
        return 1.0 / min(rates)


@dataclass(frozen=True)
class DetectorModel:
    """Detection efficiency, Gaussian timing jitter, dead time and dark counts."""

    efficiency: float = 1.0
    irf_sigma_ps: float = 0.0
    dead_time_ps: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValidationError("efficiency must be in [0, 1]")
        if min(self.irf_sigma_ps, self.dead_time_ps, self.dark_rate) < 0:
            raise ValidationError("detector times and rates must be >= 0")

    @property
    def is_ideal(self) -> bool:
        return (self.efficiency == 1.0 and self.irf_sigma_ps == 0
                and self.dead_time_ps == 0 and self.dark_rate == 0)


@dataclass(frozen=True)
class IdealEmission:
    """Emission record before detection.

    ``times`` are in ps, ``lines`` hold :data:`XX_LINE` / :data:`X_LINE`, and
    ``entered`` is the time the emitting level was populated, so
    ``times - entered`` is the dwell time of each emission.
    """

    times: np.ndarray
    lines: np.ndarray
    entered: np.ndarray
    duration_ps: float

    def line(self, line: int) -> np.ndarray:
        return self.times[self.lines == line]


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Child seed sequence for component ``key`` of a run seeded with ``seed``.

    ``seed`` may be an int in [0, 2**64) or an existing SeedSequence, in which
    case ``key`` is appended to its spawn key.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy,
                                      spawn_key=tuple(seed.spawn_key) + key)
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    return np.random.SeedSequence(seed, spawn_key=key)


def _rng(seed, *key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


@numba.njit(cache=True, nogil=True)
def _enter(level, shelved_level, p_slow, u):
    if p_slow > 0.0 and u < p_slow:
        return shelved_level
    return level


@numba.njit(cache=True, nogil=True)
def _kmc_kernel(pulsed, p1, p2, capture, period, gx, gxx, p_slow, slow_rate,
                duration, state_in, e_rand, u_rand, out_t, out_line, out_enter):
    """Advance the chain until randoms, output space, or time run out.

    ``state_in`` = [t, level, t_entered, pulse_index, pos_e, pos_u, n_out]
    is updated in place.  Returns True when the trajectory has reached
    ``duration``.
    """
    t = state_in[0]
    s = int(state_in[1])
    t_in = state_in[2]
    k = int(state_in[3])
    ie = int(state_in[4])
    iu = int(state_in[5])
    n = int(state_in[6])
    ne = e_rand.shape[0]
    nu = u_rand.shape[0]
    cap = out_t.shape[0]
    done = False
    while True:
        if ie >= ne - 2 or iu >= nu - 6 or n >= cap:
            break
        if pulsed:
            tp = k * period
            # decay rate out of the current level (no pumping between pulses)
            if s == _G:
                rate = 0.0
            elif s == _X:
                rate = gx
            elif s == _XX:
                rate = gxx
            else:
                rate = slow_rate
            t_next = math.inf
            if rate > 0.0:
                t_next = t + e_rand[ie] / rate
            if t_next < tp:
                ie += 1
                if t_next >= duration:
                    done = True
                    break
                t = t_next
                if s == _X or s == _XS:
                    out_t[n] = t
                    out_line[n] = 1
                    out_enter[n] = t_in
                    n += 1
                    s = _G
                    t_in = t
                else:
                    out_t[n] = t
                    out_line[n] = 0
                    out_enter[n] = t_in
                    n += 1
                    s = _enter(_X, _XS, p_slow, u_rand[iu])
                    iu += 1
                    t_in = t
                continue
            # next event is the pulse; the pending exponential is discarded
            if rate > 0.0:
                ie += 1
            if tp >= duration:
                done = True
                break
            t = tp
            k += 1
            if s == _G:
                if u_rand[iu] < capture:
                    s = _enter(_X, _XS, p_slow, u_rand[iu + 1])
                    t_in = t
                iu += 2
            if s == _X:
                if u_rand[iu] < capture:
                    s = _enter(_XX, _XXS, p_slow, u_rand[iu + 1])
                    t_in = t
                iu += 2
            continue
        # continuous-wave pumping
        if s == _G:
            total = p1
        elif s == _X:
            total = gx + p2
        elif s == _XX:
            total = gxx
        else:
            total = slow_rate
        t_next = t + e_rand[ie] / total
        ie += 1
        if t_next >= duration:
            done = True
            break
        t = t_next
        if s == _G:
            s = _enter(_X, _XS, p_slow, u_rand[iu])
            iu += 1
            t_in = t
        elif s == _X:
            if u_rand[iu] * total < gx:
                out_t[n] = t
                out_line[n] = 1
                out_enter[n] = t_in
                n += 1
                s = _G
                iu += 1
            else:
                s = _enter(_XX, _XXS, p_slow, u_rand[iu + 1])
                iu += 2
            t_in = t
        elif s == _XS:
            out_t[n] = t
            out_line[n] = 1
            out_enter[n] = t_in
            n += 1
            s = _G
            t_in = t
        else:
            out_t[n] = t
            out_line[n] = 0
            out_enter[n] = t_in
            n += 1
            s = _enter(_X, _XS, p_slow, u_rand[iu])
            iu += 1
            t_in = t
    state_in[0] = t
    state_in[1] = s
    state_in[2] = t_in
    state_in[3] = k
    state_in[4] = ie
    state_in[5] = iu
    state_in[6] = n
    return done


class _Stream:
    """Refillable buffer of draws that never depends on the chunk size."""

    def __init__(self, rng, draw, chunk):
        self.rng, self.draw, self.chunk = rng, draw, chunk
        self.buf = draw(rng, chunk)

    def refill(self, pos):
        self.buf = np.concatenate([self.buf[pos:], self.draw(self.rng, self.chunk)])


def simulate_ideal(emitter: EmitterModel, duration_ps: float, seed,
                   chunk: int = 1 << 18) -> IdealEmission:
    """Sample the emission record of one trajectory starting in G at t = 0."""
    if not duration_ps > 0:
        raise ValidationError("duration must be positive")
    if duration_ps < 10 * emitter.slowest_time_ps:
        raise ValidationError(
            "duration must cover at least 10x the slowest time constant")
    es = _Stream(_rng(seed, _KEY_EMITTER, 0),
                 lambda g, n: g.standard_exponential(n), chunk)
    us = _Stream(_rng(seed, _KEY_EMITTER, 1), lambda g, n: g.random(n), chunk)
    pump = emitter.pump
    pulsed = isinstance(pump, Pulsed)
    if pulsed:
        p1 = p2 = 0.0
        capture, period = pump.capture_probability, float(pump.period_ps)
    else:
        p1, p2 = pump.pump_rate, pump.rate_xx
        capture, period = 0.0, 1.0
    sb = emitter.slow_branch
    p_slow, slow_rate = (sb.probability, sb.slow_rate) if sb else (0.0, 1.0)

    state = np.zeros(7)
    times, lines, entered = [], [], []
    while True:
        out_t = np.empty(chunk)
        out_l = np.empty(chunk, np.int8)
        out_e = np.empty(chunk)
        state[6] = 0
        done = _kmc_kernel(pulsed, p1, p2, capture, period, emitter.gamma_x,
                           emitter.gamma_xx, p_slow, slow_rate, float(duration_ps),
                           state, es.buf, us.buf, out_t, out_l, out_e)
        n = int(state[6])
        times.append(out_t[:n])
        lines.append(out_l[:n])
        entered.append(out_e[:n])
        if done:
            break
        es.refill(int(state[4]))
        us.refill(int(state[5]))
        state[4] = state[5] = 0
    return IdealEmission(np.concatenate(times), np.concatenate(lines),
                         np.concatenate(entered), float(duration_ps))


@numba.njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.ones(t.shape[0], dtype=np.bool_)
    last = -np.inf
    for i in range(t.shape[0]):
        if t[i] - last < dead:
            keep[i] = False
        else:
            last = t[i]
    return keep


def apply_detector(event_times_ps, detector: DetectorModel, seed, duration_ps,
                   channel: int = 0, channel_count: int = 1,
                   resolution_ps: int = 1) -> TimeTagStream:
    """Turn ideal emission times into a detected single-channel stream.

    Steps, in order: Bernoulli thinning by ``efficiency``; Gaussian jitter of
    width ``irf_sigma_ps``; homogeneous Poisson dark counts; clamping to
    ``[0, duration]``; sorting; then dead-time filtering, which drops any
    event closer than ``dead_time_ps`` to the previous accepted event.  After
    conversion to ticks, a second event in an already occupied tick is also
    dropped, since one channel cannot register two counts in one clock tick.
    """
    t = np.asarray(event_times_ps, dtype=float)
    if t.size and np.any(np.diff(t) < 0):
        raise ValidationError("events must be sorted")
    if not duration_ps > 0:
        raise ValidationError("duration must be positive")
    if detector.efficiency < 1.0:
        t = t[_rng(seed, 0).random(t.size) < detector.efficiency]
    if detector.irf_sigma_ps > 0 and t.size:
        t = t + _rng(seed, 1).normal(0.0, detector.irf_sigma_ps, t.size)
    if detector.dark_rate > 0:
        g = _rng(seed, 2)
        n_dark = g.poisson(detector.dark_rate * duration_ps)
        t = np.concatenate([t, g.uniform(0.0, duration_ps, n_dark)])
    t = np.sort(np.clip(t, 0.0, duration_ps), kind="stable")
    if detector.dead_time_ps > 0 and t.size:
        t = t[_dead_time_mask(t, float(detector.dead_time_ps))]
    duration_ticks = int(math.ceil(duration_ps / resolution_ps))
    ticks = np.minimum(np.floor(t / resolution_ps).astype(np.int64), duration_ticks)
    if ticks.size:
        ticks = ticks[np.concatenate([[True], np.diff(ticks) > 0])]
    return TimeTagStream(ticks, np.full(ticks.size, channel), resolution_ps,
                         duration_ticks, channel_count)


def simulate(emitter: EmitterModel, detectors: Mapping[str, DetectorModel] | None,
             duration_ps: float, seed, resolution_ps: int = 1
             ) -> tuple[TimeTagStream, TimeTagStream]:
    """Simulate detected biexciton and exciton streams.

    Parameters
    ----------
    emitter : EmitterModel
    detectors : mapping
        ``{"xx": DetectorModel, "x": DetectorModel}``; missing lines get an
        ideal detector.
    duration_ps : float
    seed : int
        64-bit seed; the output is bit-identical for a fixed seed.

    Returns
    -------
    xx_stream, x_stream : TimeTagStream
        Channel 0 holds the XX line and channel 1 the X line; both streams
        declare two channels so they can be merged directly.
    """
    detectors = dict(detectors or {})
    unknown = set(detectors) - set(LINES)
    if unknown:
        raise ValidationError(f"unknown detector line(s): {sorted(unknown)}")
    ideal = simulate_ideal(emitter, duration_ps, seed)
    out = []
    for name, line in (("xx", XX_LINE), ("x", X_LINE)):
        det = detectors.get(name, DetectorModel())
        out.append(apply_detector(ideal.line(line), det,
                                  seed_sequence(seed, _KEY_DETECTOR[line]),
                                  duration_ps, channel=line, channel_count=2,
                                  resolution_ps=resolution_ps))
    return out[0], out[1]


def simulate_batch(emitter, detectors, duration_ps, seeds: Sequence[int],
                   max_workers: int | None = None, resolution_ps: int = 1):
    """Run independent trajectories and concatenate them in seed order.

    Trajectory ``i`` is shifted by ``i * duration`` so the result reads as one
    long acquisition.  Results do not depend on ``max_workers``.
    """
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        runs = list(pool.map(
            lambda s: simulate(emitter, detectors, duration_ps, s, resolution_ps),
            seeds))
    dur_ticks = runs[0][0].duration_ticks
    total = dur_ticks * len(runs)
    merged = []
    for line in range(2):
        ts = np.concatenate([r[line].timestamps.astype(np.int64) + i * dur_ticks
                             for i, r in enumerate(runs)])
        merged.append(TimeTagStream(ts, np.full(ts.size, line), resolution_ps,
                                    total, 2))
    return merged[0], merged[1]


def split_stream(stream: TimeTagStream, ratio: float, seed
                 ) -> tuple[TimeTagStream, TimeTagStream]:
    """Route each tag to the first output with probability ``ratio``.

    Models a beam splitter in front of two detectors.  Labels are unchanged.
    """
    if not 0.0 < ratio < 1.0:
        raise ValidationError("ratio must lie strictly between 0 and 1")
    first = _rng(seed, _KEY_SPLIT).random(len(stream)) < ratio

    def part(mask):
        return TimeTagStream(stream.timestamps[mask], stream.channels[mask],
                             stream.resolution_ps, stream.duration_ticks,
                             stream.channel_count)

    return part(first), part(~first)
