"""
Damped Gauss-Newton (Levenberg-Marquardt) least squares with named,
bounded and optionally fixed parameters.

Bounds are enforced by reparameterisation: ``"positive"`` parameters are
optimised as ``log(p)``, ``"nonneg"`` ones as ``sqrt(p)``, ``"free"`` ones as
is.  Uncertainties are mapped back to natural units with the derivative of
the transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = ["FitResult", "levenberg_marquardt", "Param"]


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``uncertainties`` holds one-sigma errors from the inverse curvature of
    the objective and is ``None`` when the fit did not converge.
    """

    parameters: dict
    uncertainties: dict | None
    reduced_chi2: float
    converged: bool
    n_iter: int
    objective_trace: list = field(default_factory=list)
    residuals: np.ndarray | None = None
    covariance: np.ndarray | None = None
    free: tuple = ()

    def to_dict(self) -> dict:
        return {
            "parameters": self.parameters,
            "uncertainties": self.uncertainties,
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "residuals": None if self.residuals is None else self.residuals.tolist(),
        }


@dataclass(frozen=True)
class Param:
    name: str
    value: float
    kind: str = "free"  # "free" | "positive" | "nonneg"


def _to_internal(v, kind):
    if kind == "positive":
        return np.log(v)
    if kind == "nonneg":
        return np.sqrt(max(v, 0.0))
    return v


def _to_natural(u, kind):
    if kind == "positive":
        return np.exp(u)
    if kind == "nonneg":
        return u * u
    return u


def _dnat(u, kind):
    if kind == "positive":
        return np.exp(u)
    if kind == "nonneg":
        return 2.0 * u
    return 1.0


def _safe_residual(residual, unpack, u):
    """Residual vector, or ``None`` where the model cannot be evaluated.

    Trial steps may leave the region where the model is defined (overflowing
    rates, singular matrices); such steps are treated as uphill.
    """
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = np.asarray(residual(unpack(u)), dtype=float)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError):
        return None
    return r if np.all(np.isfinite(r)) else None


def levenberg_marquardt(
    residual: Callable[[dict], np.ndarray],
    params: Sequence[Param],
    fixed: set | frozenset = frozenset(),
    jacobian: Callable[[dict], Mapping[str, np.ndarray]] | None = None,
    max_iter: int = 500,
    ftol: float = 1e-10,
    xtol: float = 1e-12,
    fd_step: float = 1e-6,
    scale_covariance: bool = False,
) -> FitResult:
    """Minimise ``sum(residual(p)**2)``.

    Parameters
    ----------
    residual : callable
        Maps a ``{name: value}`` dict to the weighted residual vector.
    params : sequence of Param
        Starting values and bound kinds.
    fixed : set of str
        Names held at their starting value.
    jacobian : callable, optional
        Returns ``{name: d residual / d value}`` in natural units for the free
        parameters.  Central differences in internal coordinates otherwise.
    scale_covariance : bool
        Multiply the covariance by the reduced chi-square (use when the
        residuals are not normalised by true standard errors).

    Returns
    -------
    FitResult
        The objective trace holds the objective after every accepted step and
        is non-increasing.
    """
    names = [p.name for p in params]
    kinds = {p.name: p.kind for p in params}
    nat = {p.name: float(p.value) for p in params}
    free = [n for n in names if n not in fixed]
    u = np.array([_to_internal(nat[n], kinds[n]) for n in free], dtype=float)

    def unpack(uvec):
        d = dict(nat)
        for n, val in zip(free, uvec):
            d[n] = float(_to_natural(val, kinds[n]))
        return d

    def jac_internal(uvec, r0):
        p = unpack(uvec)
        if jacobian is not None:
            jn = jacobian(p)
            cols = [np.asarray(jn[n]) * _dnat(uv, kinds[n]) for n, uv in zip(free, uvec)]
            return np.column_stack(cols)
        cols = []
        for k in range(len(uvec)):
            h = fd_step * max(1.0, abs(uvec[k]))
            up, dn = uvec.copy(), uvec.copy()
            up[k] += h
            dn[k] -= h
            cols.append((residual(unpack(up)) - residual(unpack(dn))) / (2 * h))
        return np.column_stack(cols)

    r = np.asarray(residual(unpack(u)), dtype=float)
    obj = float(r @ r)
    trace = [obj]
    n_data = r.size
    if not free:
        return FitResult(dict(nat), {n: 0.0 for n in names}, obj / max(n_data, 1),
                         True, 0, trace, r, np.zeros((0, 0)), ())
    if not np.isfinite(obj):
        raise ValueError("objective is not finite at the starting point")

    lam = 1e-3
    converged = False
    it = 0
    J = jac_internal(u, r)
    while it < max_iter:
        it += 1
        g = J.T @ r
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1e-12
        accepted = False
        while lam < 1e16:
            try:
                step = -np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            u_new = u + step
            r_new = _safe_residual(residual, unpack, u_new)
            obj_new = np.inf if r_new is None else float(r_new @ r_new)
            if np.isfinite(obj_new) and obj_new <= obj:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no downhill step at any damping: the current point is a minimum
            converged = True
            break
        rel = (obj - obj_new) / max(obj, 1e-300)
        snorm = float(np.linalg.norm(step))
        u, r, obj = u_new, r_new, obj_new
        trace.append(obj)
        lam = max(lam / 10, 1e-12)
        if rel < ftol or snorm < xtol * (1.0 + np.linalg.norm(u)):
            converged = True
            break
        J = jac_internal(u, r)

    p = unpack(u)
    dof = max(n_data - len(free), 1)
    redchi = obj / dof
    J = jac_internal(u, r)
    dn = np.array([_dnat(uv, kinds[n]) for n, uv in zip(free, u)])
    with np.errstate(all="ignore"):
        A = J.T @ J
        try:
            cov_int = np.linalg.inv(A)
            if not np.all(np.isfinite(cov_int)) or np.linalg.cond(A) > 1e15:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            cov_int = np.full_like(A, np.inf)
        cov = cov_int * np.outer(dn, dn)
    if scale_covariance:
        cov = cov * redchi
    unc = None
    if converged:
        unc = {n: 0.0 for n in names}
        for k, n in enumerate(free):
            v = cov[k, k]
            unc[n] = float(np.sqrt(v)) if np.isfinite(v) and v >= 0 else float("inf")
    return FitResult(p, unc, float(redchi), converged, it, trace, r, cov, tuple(free))
