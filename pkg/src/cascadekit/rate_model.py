"""
Deterministic three-level rate equations for the XX -> X -> G cascade.

Populations are ordered ``(n_g, n_x, n_xx)``.  The generator ``M`` acts on
column vectors, ``dn/dt = M n``, with pumping G->X and X->XX and radiative
decays XX->X and X->G.  Because the chain is a birth-death process it obeys
detailed balance, so ``M`` is similar to a symmetric matrix; the vectorised
curve functions use that symmetric eigendecomposition, while :func:`evolve`
uses ``scipy.linalg.expm`` directly.

Correlation functions follow from projecting onto the post-detection state
and evolving:

* cross, tau > 0 (X after XX): start in X, ``g2 = n_x(tau) / n_x_ss``
* cross, tau < 0 (XX after X): start in G, ``g2 = n_xx(|tau|) / n_xx_ss``
* auto X: start in G; auto XX: start in X.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from .errors import DomainError, ValidationError

__all__ = [
    "RateModel",
    "Populations",
    "rate_matrix",
    "evolve",
    "evolve_many",
    "steady_state",
    "predict_cross_g2",
    "predict_auto_g2",
    "predict_intensity_vs_power",
    "convolve_irf",
    "bin_average",
    "tick_bin_average",
    "FWHM_TO_SIGMA",
    "system_response_sigma",
]

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


def system_response_sigma(response_ps: float = 145.0, as_fwhm: bool = True) -> float:
    """Gaussian sigma for a quoted timing response (FWHM by default)."""
    return response_ps * FWHM_TO_SIGMA if as_fwhm else float(response_ps)


@dataclass(frozen=True)
class RateModel:
    """Rates in 1/ps.  ``pump_xx`` defaults to ``pump``."""

    gamma_x: float = 1.0 / 142.0
    gamma_xx: float = 1.0 / 106.0
    pump: float = 0.0
    pump_xx: float | None = None

    def __post_init__(self):
        if not (self.gamma_x > 0 and self.gamma_xx > 0):
            raise ValidationError("decay rates must be positive")
        if self.pump < 0 or (self.pump_xx is not None and self.pump_xx < 0):
            raise ValidationError("pump rates must be non-negative")

    @property
    def p2(self) -> float:
        return self.pump if self.pump_xx is None else self.pump_xx

    def with_pump(self, pump: float) -> "RateModel":
        """Same model at another pump rate, keeping the pump_xx / pump ratio."""
        p2 = None
        if self.pump_xx is not None and self.pump > 0:
            p2 = self.pump_xx * pump / self.pump
        return RateModel(self.gamma_x, self.gamma_xx, pump, p2)


@dataclass(frozen=True)
class Populations:
    n_g: float
    n_x: float
    n_xx: float

    def __post_init__(self):
        v = self.as_array()
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValidationError("occupation outside [0, 1]")
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValidationError("occupations do not sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.n_g, self.n_x, self.n_xx], dtype=float)

    @classmethod
    def from_array(cls, v) -> "Populations":
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        return cls(*v)

    @classmethod
    def ground(cls):
        return cls(1.0, 0.0, 0.0)

    @classmethod
    def exciton(cls):
        return cls(0.0, 1.0, 0.0)

    @classmethod
    def biexciton(cls):
        return cls(0.0, 0.0, 1.0)


def rate_matrix(model: RateModel) -> np.ndarray:
    """3x3 generator with zero column sums."""
    p1, p2, gx, gxx = model.pump, model.p2, model.gamma_x, model.gamma_xx
    return np.array([
        [-p1, gx, 0.0],
        [p1, -(gx + p2), gxx],
        [0.0, p2, -gxx],
    ])


def evolve(model: RateModel, initial: Populations, t_ps: float) -> Populations:
    """Populations after ``t_ps`` by the matrix exponential of ``M t``."""
    if t_ps < 0:
        raise DomainError("t must be non-negative")
    n0 = initial.as_array()
    if t_ps == 0:
        return Populations.from_array(n0)
    n = linalg.expm(rate_matrix(model) * t_ps) @ n0
    return Populations.from_array(n / n.sum())


def steady_state(model: RateModel) -> Populations:
    """Normalised null vector of the generator."""
    if not model.pump > 0:
        raise DomainError("steady state needs pump > 0")
    m = rate_matrix(model)
    # replace one balance row by the normalisation condition
    a = m.copy()
    a[0, :] = 1.0
    b = np.array([1.0, 0.0, 0.0])
    return Populations.from_array(np.linalg.solve(a, b))


def _eig_symmetric(model: RateModel):
    """Eigen-decomposition of M through its detailed-balance symmetrisation."""
    p1, p2, gx, gxx = model.pump, model.p2, model.gamma_x, model.gamma_xx
    # stationary weights up to normalisation
    w = np.array([1.0, p1 / gx, p1 * p2 / (gx * gxx)])
    w /= w.sum()
    d = np.sqrt(w)
    s = rate_matrix(model) * d[None, :] / d[:, None]
    s = 0.5 * (s + s.T)
    lam, q = np.linalg.eigh(s)
    return lam, q, d


def evolve_many(model: RateModel, initial, t_ps) -> np.ndarray:
    """Populations for an array of times; shape ``(len(t), 3)``.

    Needs ``pump > 0``; falls back to :func:`evolve` per point otherwise.
    """
    t = np.asarray(t_ps, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    n0 = initial.as_array() if isinstance(initial, Populations) else np.asarray(initial, float)
    if not (model.pump > 0 and model.p2 > 0):
        return np.array([linalg.expm(rate_matrix(model) * ti) @ n0 for ti in t.ravel()]
                        ).reshape(t.shape + (3,))
    lam, q, d = _eig_symmetric(model)
    c = q.T @ (n0 / d)
    out = (np.exp(np.multiply.outer(t, lam)) * c) @ q.T * d
    return out


def _emission(model, start, line, t):
    n = evolve_many(model, start, t)
    return n[..., 1] if line == "x" else n[..., 2]


def predict_cross_g2(model: RateModel, taus) -> np.ndarray:
    """Cross-correlation for start = XX photon, stop = X photon.

    ``tau = t_X - t_XX``.  The curve is right-continuous at zero: ``tau = 0``
    returns the bunched ``0+`` value, while every ``tau < 0`` starts from the
    ground state and therefore vanishes as ``tau -> 0-``.
    """
    taus = np.asarray(taus, dtype=float)
    ss = steady_state(model).as_array()
    out = np.empty_like(taus)
    pos = taus >= 0
    out[pos] = _emission(model, Populations.exciton(), "x", taus[pos]) / ss[1]
    out[~pos] = _emission(model, Populations.ground(), "xx", -taus[~pos]) / ss[2]
    return out


def predict_auto_g2(model: RateModel, line: str, taus) -> np.ndarray:
    """Autocorrelation of the ``"x"`` or ``"xx"`` line; symmetric in tau."""
    taus = np.abs(np.asarray(taus, dtype=float))
    ss = steady_state(model).as_array()
    if line == "x":
        return _emission(model, Populations.ground(), "x", taus) / ss[1]
    if line == "xx":
        return _emission(model, Populations.exciton(), "xx", taus) / ss[2]
    raise ValueError(f"unknown line {line!r}")


def predict_intensity_vs_power(model: RateModel, pump_values):
    """Steady-state emission rates ``(I_x, I_xx)`` for each pump rate."""
    pumps = np.asarray(pump_values, dtype=float)
    ix, ixx = np.empty_like(pumps), np.empty_like(pumps)
    for i, p in enumerate(pumps.ravel()):
        n = steady_state(model.with_pump(p))
        ix.flat[i] = model.gamma_x * n.n_x
        ixx.flat[i] = model.gamma_xx * n.n_xx
    return ix, ixx


def _gaussian_kernel(sigma, dx):
    half = int(np.ceil(8.0 * sigma / dx))
    x = np.arange(-half, half + 1) * dx
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_irf(x, y, sigma_ps: float) -> np.ndarray:
    """Convolve a uniformly sampled curve with a normalised Gaussian.

    The curve is treated as zero outside the grid, so the grid must extend
    well past the region of interest (5 sigma or more).  Samples that sit on a
    jump discontinuity should carry the mean of the two one-sided limits;
    the sum then converges at second order in the grid step.
    """
    y = np.asarray(y, dtype=float)
    if sigma_ps == 0:
        return y.copy()
    if sigma_ps < 0:
        raise DomainError("sigma must be non-negative")
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0):
        raise ValidationError("convolve_irf needs a uniform grid")
    return signal.fftconvolve(y, _gaussian_kernel(sigma_ps, dx), mode="same")


def bin_average(fn, edges, sub: int = 16) -> np.ndarray:
    """Average of ``fn`` over each half-open bin ``[edges[i], edges[i+1])``.

    Gauss-Legendre nodes avoid evaluating exactly on the bin edges, so a jump
    at an edge is handled correctly.
    """
    edges = np.asarray(edges, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(sub)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = fn(pts.ravel()).reshape(pts.shape)
    return 0.5 * vals @ weights


def tick_bin_average(fn, edges, resolution_ps: int = 1, sub: int = 8) -> np.ndarray:
    """Expected bin values for delays measured between tick-floored timestamps.

    Flooring both timestamps to ``resolution_ps`` ticks turns a continuous
    delay into an integer tick difference with a triangular spread of one
    tick either side.  Each bin ``[lo, hi)`` (edges on tick multiples)
    collects the integer differences ``k`` with ``lo <= k*res < hi``; this
    returns the mean over those ``k`` of ``fn`` smoothed by the triangle.
    """
    edges = np.asarray(edges, dtype=float)
    res = float(resolution_ps)
    k = np.arange(edges[0], edges[-1], res)
    nodes, weights = np.polynomial.legendre.leggauss(sub)
    # integrate (1 - |u|) fn(k + u) over u in [-1, 0] and [0, 1] separately
    u = np.concatenate([0.5 * (nodes - 1.0), 0.5 * (nodes + 1.0)])
    w = np.concatenate([0.5 * weights, 0.5 * weights]) * (1.0 - np.abs(u))
    pts = k[:, None] + res * u[None, :]
    smoothed = fn(pts.ravel()).reshape(pts.shape) @ w
    idx = np.searchsorted(edges, k, side="right") - 1
    sums = np.bincount(idx, weights=smoothed, minlength=edges.size - 1)
    n = np.bincount(idx, minlength=edges.size - 1)
    return sums / n
