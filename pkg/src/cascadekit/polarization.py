"""
Mueller calculus for a quarter-wave / half-wave / polarizer analyzer.

Angles are in radians, measured from horizontal.  Stokes vectors use the
convention ``S1 = I cos2psi cos2chi``, ``S2 = I sin2psi cos2chi``,
``S3 = I sin2chi``, where ``psi`` is the ellipse orientation and
``tan(chi)`` the minor/major axis ratio (signed by handedness).

By default light meets the QWP first, then the HWP, then the polarizer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .lsq import FitResult, Param, levenberg_marquardt

__all__ = [
    "PolarizationEllipse",
    "StokesVector",
    "AnalyzerConfig",
    "FineStructureDoublet",
    "ellipse_to_stokes",
    "stokes_to_ellipse",
    "mueller",
    "rotation",
    "retarder",
    "polarizer",
    "analyzer_matrix",
    "analyzer_intensity",
    "sweep_qwp",
    "fit_ellipticity",
    "EllipticityFit",
    "transmitting_analyzer",
    "doublet_spectrum",
]


@dataclass(frozen=True)
class PolarizationEllipse:
    psi: float
    chi: float

    def __post_init__(self):
        if not -np.pi / 4 - 1e-12 <= self.chi <= np.pi / 4 + 1e-12:
            raise ValidationError("chi must lie in [-pi/4, pi/4]")

    @property
    def axis_ratio(self) -> float:
        """Signed minor/major axis ratio, ``tan(chi)``."""
        return float(np.tan(self.chi))

    def orthogonal(self) -> "PolarizationEllipse":
        return PolarizationEllipse(float(np.mod(self.psi + np.pi / 2, np.pi)), -self.chi)

    def canonical(self) -> "PolarizationEllipse":
        return PolarizationEllipse(float(np.mod(self.psi, np.pi)), self.chi)


@dataclass(frozen=True)
class StokesVector:
    s0: float
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValidationError("S0 must be positive")
        if self.s1**2 + self.s2**2 + self.s3**2 > self.s0**2 * (1 + 1e-9):
            raise ValidationError("degree of polarization exceeds one")

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3], dtype=float)

    @classmethod
    def from_array(cls, v) -> "StokesVector":
        return cls(*map(float, v))

    @classmethod
    def unpolarized(cls, intensity: float = 1.0) -> "StokesVector":
        return cls(intensity, 0.0, 0.0, 0.0)

    @property
    def degree_of_polarization(self) -> float:
        return float(np.sqrt(self.s1**2 + self.s2**2 + self.s3**2) / self.s0)


@dataclass(frozen=True)
class AnalyzerConfig:
    qwp_angle: float = 0.0
    hwp_angle: float = 0.0
    polarizer_angle: float = 0.0
    order: tuple = ("qwp", "hwp", "polarizer")

    def __post_init__(self):
        if not np.all(np.isfinite([self.qwp_angle, self.hwp_angle, self.polarizer_angle])):
            raise ValidationError("analyzer angles must be finite")
        if sorted(self.order) != ["hwp", "polarizer", "qwp"]:
            raise ValidationError("order must be a permutation of qwp, hwp, polarizer")


@dataclass(frozen=True)
class FineStructureDoublet:
    """Two orthogonally polarized lines split by ``splitting_ueV``.

    ``component_plus`` sits at ``center + splitting / 2``.  A negative
    splitting swaps the energetic order of the two polarizations.
    """

    center_energy_ueV: float
    splitting_ueV: float
    linewidth_ueV: float
    component_plus: PolarizationEllipse
    component_minus: PolarizationEllipse | None = None
    amplitude_plus: float = 1.0
    amplitude_minus: float = 1.0

    def __post_init__(self):
        if self.component_minus is None:
            object.__setattr__(self, "component_minus", self.component_plus.orthogonal())
        p, m = self.component_plus, self.component_minus
        dpsi = np.mod(p.psi - m.psi, np.pi)
        if not (np.isclose(dpsi, np.pi / 2, atol=1e-9) and np.isclose(p.chi, -m.chi, atol=1e-12)):
            raise ValidationError("doublet components must be orthogonal")
        if not self.linewidth_ueV > 0:
            raise ValidationError("linewidth must be positive")


def ellipse_to_stokes(e: PolarizationEllipse, intensity: float = 1.0) -> StokesVector:
    c2x = np.cos(2 * e.chi)
    return StokesVector(intensity,
                        intensity * np.cos(2 * e.psi) * c2x,
                        intensity * np.sin(2 * e.psi) * c2x,
                        intensity * np.sin(2 * e.chi))


def stokes_to_ellipse(s: StokesVector) -> PolarizationEllipse:
    """Ellipse of the polarized part, ``psi`` in ``[0, pi)``."""
    p = np.sqrt(s.s1**2 + s.s2**2 + s.s3**2)
    if p == 0:
        raise ValidationError("unpolarized light has no ellipse")
    chi = 0.5 * np.arcsin(np.clip(s.s3 / p, -1.0, 1.0))
    psi = np.mod(0.5 * np.arctan2(s.s2, s.s1), np.pi)
    if psi > np.pi - 1e-12:
        psi = 0.0
    return PolarizationEllipse(float(psi), float(chi))


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array([[1, 0, 0, 0], [0, c, s, 0], [0, -s, c, 0], [0, 0, 0, 1]], dtype=float)


def retarder(theta: float, delta: float) -> np.ndarray:
    """Linear retarder, fast axis at ``theta``, retardance ``delta``."""
    c, s = np.cos(delta), np.sin(delta)
    m = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, c, s], [0, 0, -s, c]], dtype=float)
    return rotation(-theta) @ m @ rotation(theta)


def polarizer(theta: float) -> np.ndarray:
    """Ideal linear polarizer with transmission axis at ``theta``."""
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return 0.5 * np.array([[1, c, s, 0], [c, c * c, c * s, 0],
                           [s, c * s, s * s, 0], [0, 0, 0, 0]], dtype=float)


def mueller(element: str, angle: float) -> np.ndarray:
    element = element.lower()
    if element == "qwp":
        return retarder(angle, np.pi / 2)
    if element == "hwp":
        return retarder(angle, np.pi)
    if element in ("polarizer", "pol"):
        return polarizer(angle)
    raise ValueError(f"unknown element {element!r}")


def analyzer_matrix(a: AnalyzerConfig) -> np.ndarray:
    angles = {"qwp": a.qwp_angle, "hwp": a.hwp_angle, "polarizer": a.polarizer_angle}
    m = np.eye(4)
    for name in a.order:
        m = mueller(name, angles[name]) @ m
    return m


def analyzer_intensity(s, a: AnalyzerConfig) -> float:
    """Transmitted intensity (S0 after the analyzer)."""
    v = s.as_array() if isinstance(s, StokesVector) else np.asarray(s, dtype=float)
    return float(analyzer_matrix(a)[0] @ v)


def _qwp_rows(qwp_angles, hwp_angle, pol_angle, order):
    """First rows of the analyzer matrix for each QWP angle, shape (n, 4)."""
    return np.array([analyzer_matrix(AnalyzerConfig(q, hwp_angle, pol_angle, order))[0]
                     for q in np.asarray(qwp_angles, dtype=float)])


def sweep_qwp(s, qwp_angles, hwp_angle: float = 0.0, pol_angle: float = 0.0,
              order=("qwp", "hwp", "polarizer")) -> np.ndarray:
    """Analyzer transmission as the QWP rotates; period pi in the QWP angle."""
    v = s.as_array() if isinstance(s, StokesVector) else np.asarray(s, dtype=float)
    return _qwp_rows(qwp_angles, hwp_angle, pol_angle, order) @ v


@dataclass
class EllipticityFit:
    chi: float
    psi: float
    chi_err: float | None
    psi_err: float | None
    amplitude: float
    offset: float
    fit: FitResult = field(repr=False)


def _canonical_angles(psi, chi):
    # round trip through Stokes space folds chi into [-pi/4, pi/4], psi into [0, pi)
    s3 = np.sin(2 * chi)
    c = np.cos(2 * chi)
    s1, s2 = np.cos(2 * psi) * c, np.sin(2 * psi) * c
    e = stokes_to_ellipse(StokesVector(1.0, s1, s2, s3))
    return e.psi, e.chi


def fit_ellipticity(qwp_angles, intensities, hwp_angle: float = 0.0,
                    pol_angle: float = 0.0, order=("qwp", "hwp", "polarizer")
                    ) -> EllipticityFit:
    """Recover the ellipse of a fully polarized line from a QWP sweep.

    The intensity is modelled as ``offset + amplitude * T(theta; psi, chi)``
    with ``T`` the analyzer transmission of unit fully-polarized light.  A
    linear least-squares estimate of the Stokes vector seeds the nonlinear
    fit.
    """
    th = np.asarray(qwp_angles, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if th.size < 5 or np.ptp(th) < np.pi - 1e-9:
        raise ValidationError("the sweep must span at least pi of QWP rotation")
    rows = _qwp_rows(th, hwp_angle, pol_angle, order)
    # S0 and a constant offset are degenerate in the linear model
    A = np.column_stack([np.ones_like(th), rows[:, 1:]])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    s_pol = coef[1:]
    amp0 = float(np.linalg.norm(s_pol)) or float(np.ptp(y)) or 1.0
    e0 = stokes_to_ellipse(StokesVector(amp0, *s_pol)) if np.any(s_pol) else \
        PolarizationEllipse(0.0, 0.0)
    offset0 = float(coef[0] - rows[:, 0].mean() * amp0)

    def model(p):
        s = np.array([1.0,
                      np.cos(2 * p["psi"]) * np.cos(2 * p["chi"]),
                      np.sin(2 * p["psi"]) * np.cos(2 * p["chi"]),
                      np.sin(2 * p["chi"])])
        return p["offset"] + p["amplitude"] * (rows @ s)

    params = [Param("chi", e0.chi), Param("psi", e0.psi),
              Param("amplitude", amp0, "positive"), Param("offset", offset0)]
    scale = max(float(np.abs(y).max()), 1e-300)
    res = levenberg_marquardt(lambda p: (model(p) - y) / scale, params,
                              scale_covariance=True)
    psi, chi = _canonical_angles(res.parameters["psi"], res.parameters["chi"])
    u = res.uncertainties
    return EllipticityFit(chi, psi, None if u is None else u["chi"],
                          None if u is None else u["psi"],
                          res.parameters["amplitude"], res.parameters["offset"], res)


def transmitting_analyzer(e: PolarizationEllipse) -> AnalyzerConfig:
    """QWP/polarizer setting that fully passes ``e`` and blocks its orthogonal.

    A QWP with its fast axis along the ellipse major axis turns the ellipse
    into linear light; with the HWP parked at zero the polarizer is aligned
    with the light leaving the HWP.
    """
    s_out = mueller("hwp", 0.0) @ mueller("qwp", e.psi) @ ellipse_to_stokes(e).as_array()
    angle = 0.5 * np.arctan2(s_out[2], s_out[1])
    return AnalyzerConfig(qwp_angle=e.psi, hwp_angle=0.0, polarizer_angle=float(angle))


def _lineshape(x, x0, fwhm, shape):
    if shape == "lorentzian":
        g = fwhm / 2
        return g**2 / ((x - x0) ** 2 + g**2)
    if shape == "gaussian":
        return np.exp(-4 * np.log(2) * ((x - x0) / fwhm) ** 2)
    raise ValueError(f"unknown lineshape {shape!r}")


def doublet_spectrum(d: FineStructureDoublet, a: AnalyzerConfig, energy_grid,
                     lineshape: str = "lorentzian") -> np.ndarray:
    """Analyzer-filtered spectrum of a fine-structure doublet (unit peak heights)."""
    e = np.asarray(energy_grid, dtype=float)
    half = d.splitting_ueV / 2
    t_plus = analyzer_intensity(ellipse_to_stokes(d.component_plus, d.amplitude_plus), a)
    t_minus = analyzer_intensity(ellipse_to_stokes(d.component_minus, d.amplitude_minus), a)
    return (t_plus * _lineshape(e, d.center_energy_ueV + half, d.linewidth_ueV, lineshape)
            + t_minus * _lineshape(e, d.center_energy_ueV - half, d.linewidth_ueV, lineshape))
