"""
Fits of time-resolved decays, power-law intensities and cross-correlations.

The decay model is a sum of one to three exponentials, each convolved with a
Gaussian instrument response::

    f(t) = baseline + sum_i A_i * h(t - t0; tau_i, sigma)

    h(x) = 1/(2 tau) * exp(sigma^2 / (2 tau^2) - x / tau)
           * erfc(sigma / (sqrt(2) tau) - x / (sqrt(2) sigma))

``h`` is the exponentially modified Gaussian; it integrates to one, so
``A_i`` is the number of counts (times bin width) carried by component ``i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError, ValidationError
from .lsq import FitResult, Param, levenberg_marquardt
from .rate_model import RateModel, bin_average, convolve_irf, predict_cross_g2
from .timetags import TimeTagStream

__all__ = [
    "DecayModel",
    "emg",
    "emg_derivatives",
    "model_value",
    "model_jacobian",
    "fit_decay",
    "fit_power_law",
    "CrossG2Model",
    "cross_g2_model_curve",
    "fit_g2_cross",
    "transient_histogram",
    "fit_report_json",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DecayModel:
    """Multi-exponential decay with Gaussian IRF.

    ``components`` is a sequence of ``(amplitude, tau_ps)`` pairs, stored
    with strictly increasing ``tau``.
    """

    components: tuple
    t0_ps: float = 0.0
    irf_sigma_ps: float = 0.0
    baseline: float = 0.0

    def __post_init__(self):
        comps = tuple((float(a), float(t)) for a, t in self.components)
        if not 1 <= len(comps) <= 3:
            raise ValidationError("1 to 3 components required")
        if any(t <= 0 for _, t in comps):
            raise DomainError("lifetimes must be positive")
        if any(a < 0 for a, _ in comps) or self.baseline < 0 or self.irf_sigma_ps < 0:
            raise ValidationError("amplitudes, baseline and sigma must be >= 0")
        comps = tuple(sorted(comps, key=lambda c: c[1]))
        taus = [t for _, t in comps]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValidationError("lifetimes must be distinct")
        object.__setattr__(self, "components", comps)

    @property
    def taus(self):
        return [t for _, t in self.components]

    def param_dict(self) -> dict:
        d = {"t0": self.t0_ps, "sigma": self.irf_sigma_ps, "baseline": self.baseline}
        for i, (a, t) in enumerate(self.components):
            d[f"amp{i}"] = a
            d[f"tau{i}"] = t
        return d

    @classmethod
    def from_params(cls, p: dict) -> "DecayModel":
        n = sum(1 for k in p if k.startswith("tau"))
        comps = [(p[f"amp{i}"], p[f"tau{i}"]) for i in range(n)]
        return cls(tuple(comps), p["t0"], p["sigma"], p["baseline"])


def _gauss(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2) / (_SQRT2PI * sigma)


def emg(x, tau, sigma):
    """Unit-area exponential decay (lifetime ``tau``) convolved with a Gaussian.

    ``x`` is time relative to the decay origin.  ``sigma = 0`` gives the bare
    one-sided exponential.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    x = np.asarray(x, dtype=float)
    if sigma == 0:
        return np.where(x >= 0, np.exp(-np.maximum(x, 0.0) / tau) / tau, 0.0)
    z = sigma / (_SQRT2 * tau) - x / (_SQRT2 * sigma)
    out = np.empty(np.broadcast(x, z).shape)
    big = z > 0
    # erfc(z) = erfcx(z) exp(-z^2) keeps the product finite for large z
    out[big] = np.exp(-0.5 * (x[big] / sigma) ** 2) * special.erfcx(z[big]) / (2 * tau)
    xs = x[~big]
    out[~big] = (np.exp(sigma**2 / (2 * tau**2) - xs / tau)
                 * special.erfc(z[~big]) / (2 * tau))
    return out


def emg_derivatives(x, tau, sigma):
    """``(h, dh/dx, dh/dtau, dh/dsigma)`` for ``sigma > 0``."""
    x = np.asarray(x, dtype=float)
    h = emg(x, tau, sigma)
    g = _gauss(x, sigma)
    dx = (g - h) / tau
    dtau = -h / tau + h * (x / tau**2 - sigma**2 / tau**3) + sigma**2 * g / tau**3
    dsig = sigma / tau**2 * (h - g) - x * g / (sigma * tau)
    return h, dx, dtau, dsig


def model_value(model: DecayModel, t_ps) -> np.ndarray:
    t = np.asarray(t_ps, dtype=float)
    out = np.full(t.shape, model.baseline, dtype=float)
    for a, tau in model.components:
        out = out + a * emg(t - model.t0_ps, tau, model.irf_sigma_ps)
    return out


def model_jacobian(params: dict, t_ps) -> dict:
    """Analytic partial derivatives of :func:`model_value` by parameter name."""
    t = np.asarray(t_ps, dtype=float)
    x = t - params["t0"]
    sigma = params["sigma"]
    n = sum(1 for k in params if k.startswith("tau"))
    jac = {"baseline": np.ones_like(t), "t0": np.zeros_like(t), "sigma": np.zeros_like(t)}
    for i in range(n):
        a, tau = params[f"amp{i}"], params[f"tau{i}"]
        if sigma > 0:
            h, dx, dtau, dsig = emg_derivatives(x, tau, sigma)
            jac["sigma"] += a * dsig
        else:
            h = emg(x, tau, 0.0)
            dx = np.where(x >= 0, -h / tau, 0.0)
            dtau = np.where(x >= 0, h * (x / tau**2 - 1.0 / tau), 0.0)
        jac["t0"] -= a * dx
        jac[f"amp{i}"] = h
        jac[f"tau{i}"] = a * dtau
    return jac


def _kinds(params):
    kinds = {}
    for k in params:
        if k.startswith("tau") or k == "sigma":
            kinds[k] = "positive"
        elif k.startswith("amp") or k == "baseline":
            kinds[k] = "nonneg"
        else:
            kinds[k] = "free"
    return kinds


def fit_decay(t_ps, counts, initial: DecayModel, fixed_params=frozenset(),
              max_iter: int = 500) -> FitResult:
    """Poisson-weighted least-squares fit of a decay histogram.

    Parameters
    ----------
    t_ps : array_like
        Bin centres.
    counts : array_like
        Counts per bin (raw or normalised; the amplitudes absorb the scale).
    initial : DecayModel
        Starting point.  Amplitudes are in counts x ps.
    fixed_params : set of str
        Names among ``t0, sigma, baseline, amp<i>, tau<i>`` to hold fixed.

    Returns
    -------
    FitResult
        ``parameters`` uses the same names; lifetimes come back sorted.
    """
    t = np.asarray(t_ps, dtype=float)
    y = np.asarray(counts, dtype=float)
    if t.shape != y.shape:
        raise ValidationError("t and counts differ in shape")
    if not np.any(y > 0):
        raise ValidationError("histogram has no counts")
    p0 = initial.param_dict()
    if initial.irf_sigma_ps == 0:
        fixed_params = set(fixed_params) | {"sigma"}
    free = [k for k in p0 if k not in fixed_params]
    if y.size < len(free) + 5:
        raise ValidationError("need at least 5 more bins than free parameters")
    w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    kinds = _kinds(p0)
    params = [Param(k, v, kinds[k]) for k, v in p0.items()]

    def residual(p):
        return (_value_from_params(p, t) - y) * w

    def jac(p):
        return {k: v * w for k, v in model_jacobian(p, t).items()}

    res = levenberg_marquardt(residual, params, set(fixed_params), jac, max_iter=max_iter)
    return _canonical(res)


def _value_from_params(p, t):
    x = t - p["t0"]
    out = np.full(t.shape, p["baseline"])
    n = sum(1 for k in p if k.startswith("tau"))
    for i in range(n):
        out = out + p[f"amp{i}"] * emg(x, p[f"tau{i}"], p["sigma"])
    return out


def _canonical(res: FitResult) -> FitResult:
    """Relabel components so lifetimes increase with index."""
    p = res.parameters
    n = sum(1 for k in p if k.startswith("tau"))
    order = sorted(range(n), key=lambda i: p[f"tau{i}"])
    if order == list(range(n)):
        return res
    newp, newu = dict(p), None if res.uncertainties is None else dict(res.uncertainties)
    for new, old in enumerate(order):
        for stem in ("amp", "tau"):
            newp[f"{stem}{new}"] = p[f"{stem}{old}"]
            if newu is not None:
                newu[f"{stem}{new}"] = res.uncertainties[f"{stem}{old}"]
    res.parameters, res.uncertainties = newp, newu
    return res


def fit_power_law(powers, intensities, cutoff_index: int | None = None):
    """Slope ``k`` of ``log I`` against ``log p`` and its standard error.

    Only points with index below ``cutoff_index`` enter the regression.
    """
    p = np.asarray(powers, dtype=float)[:cutoff_index]
    i = np.asarray(intensities, dtype=float)[:cutoff_index]
    if p.size < 3:
        raise ValidationError("need at least 3 points below the cutoff")
    if np.any(p <= 0) or np.any(i <= 0):
        raise ValidationError("powers and intensities must be positive")
    x, y = np.log(p), np.log(i)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    sxx = float(((x - x.mean()) ** 2).sum())
    return float(coef[0]), float(math.sqrt(s2 / sxx)) if sxx > 0 else float("inf")


def transient_histogram(stream: TimeTagStream, period_ps: float, bin_width_ps: float,
                        offset_ps: float = 0.0):
    """TCSPC histogram of arrival times modulo the pulse period.

    Returns ``(t_centres, counts)`` over ``[0, period)`` after subtracting
    ``offset_ps``.
    """
    phase = np.mod(stream.times_ps.astype(float) - offset_ps, period_ps)
    nb = int(round(period_ps / bin_width_ps))
    counts, edges = np.histogram(phase, bins=nb, range=(0.0, nb * bin_width_ps))
    return 0.5 * (edges[:-1] + edges[1:]), counts


@dataclass(frozen=True)
class CrossG2Model:
    """Rate-model cross-correlation seen through a Gaussian system response.

    ``irf_sigma_ps`` is the width of the combined two-detector response.
    ``tau_offset_ps`` shifts the curve (cable delays).
    """

    gamma_x: float = 1.0 / 142.0
    gamma_xx: float = 1.0 / 106.0
    pump: float = 1.0 / 1000.0
    irf_sigma_ps: float = 61.6
    tau_offset_ps: float = 0.0

    def rate_model(self) -> RateModel:
        return RateModel(self.gamma_x, self.gamma_xx, self.pump)


def cross_g2_model_curve(model: CrossG2Model, edges, grid_step_ps: float = 1.0):
    """Bin-averaged model for bins ``[edges[i], edges[i+1])``."""
    edges = np.asarray(edges, dtype=float)
    sigma = model.irf_sigma_ps
    pad = 8.0 * sigma + 4 * grid_step_ps
    lo = math.floor((edges[0] - pad) / grid_step_ps) * grid_step_ps
    hi = math.ceil((edges[-1] + pad) / grid_step_ps) * grid_step_ps
    grid = np.arange(lo, hi + grid_step_ps / 2, grid_step_ps)
    rm = model.rate_model()
    shifted = grid - model.tau_offset_ps
    g = predict_cross_g2(rm, shifted)
    on_zero = np.isclose(shifted, 0.0, atol=1e-9)
    if np.any(on_zero):
        g[on_zero] = 0.5 * g[on_zero]  # mean of the 0- (zero) and 0+ limits
    # subtract the asymptote so zero padding outside the grid is exact
    conv = convolve_irf(grid, g - 1.0, sigma) + 1.0 if sigma > 0 else g
    return bin_average(lambda x: np.interp(x, grid, conv), edges)


def fit_g2_cross(edges, g2, g2_err, model_init: CrossG2Model,
                 fixed=frozenset({"irf_sigma_ps", "tau_offset_ps"}),
                 max_iter: int = 500) -> FitResult:
    """Fit the IRF-convolved rate-model cross-correlation to normalised data.

    ``edges`` are the histogram bin edges (``CorrelationConfig.edges``).
    Bins with zero error get the mean error of the others.  The result also
    carries ``tau_x_ps`` and ``tau_xx_ps`` (inverse rates) with propagated
    uncertainties.
    """
    edges = np.asarray(edges, dtype=float)
    y = np.asarray(g2, dtype=float)
    e = np.asarray(g2_err, dtype=float).copy()
    if y.size != edges.size - 1:
        raise ValidationError("need one g2 value per bin")
    good = e > 0
    if not np.any(good):
        raise ValidationError("histogram is not normalised or empty")
    e[~good] = e[good].mean()
    kinds = {"gamma_x": "positive", "gamma_xx": "positive", "pump": "positive",
             "irf_sigma_ps": "positive", "tau_offset_ps": "free"}
    init = {k: getattr(model_init, k) for k in kinds}
    if init["irf_sigma_ps"] == 0:
        fixed = set(fixed) | {"irf_sigma_ps"}
        kinds["irf_sigma_ps"] = "free"
    params = [Param(k, v, kinds[k]) for k, v in init.items()]

    def residual(p):
        return (cross_g2_model_curve(CrossG2Model(**p), edges) - y) / e

    res = levenberg_marquardt(residual, params, set(fixed), max_iter=max_iter)
    p = res.parameters
    p["tau_x_ps"] = 1.0 / p["gamma_x"]
    p["tau_xx_ps"] = 1.0 / p["gamma_xx"]
    if res.uncertainties is not None:
        u = res.uncertainties
        for name in ("x", "xx"):
            with np.errstate(over="ignore", invalid="ignore"):
                v = np.float64(u[f"gamma_{name}"]) / np.float64(p[f"gamma_{name}"]) ** 2
            u[f"tau_{name}_ps"] = float(v) if np.isfinite(v) else float("inf")
    return res


def fit_report_json(res: FitResult, **extra) -> str:
    doc = res.to_dict()
    doc.update(extra)
    return json.dumps(doc, indent=2, default=float)
