"""
Polarization analysis
=====================

A quarter-wave plate, a half-wave plate and a linear polarizer in series.
Rotating the QWP and recording transmitted intensity fixes the
polarization ellipse of the light.
"""
# %%
import numpy as np

from cascadekit import polarization as pol

light = pol.PolarizationEllipse(psi=0.3, chi=0.13 * np.pi)
stokes = pol.ellipse_to_stokes(light, intensity=1000.0)
theta = np.linspace(0.0, np.pi, 73)
rng = np.random.default_rng(1)
counts = rng.poisson(pol.sweep_qwp(stokes, theta) + 20)

fit = pol.fit_ellipticity(theta, counts)
print(f"chi = {fit.chi / np.pi:+.4f} pi +- {fit.chi_err / np.pi:.4f} pi")
print(f"psi = {fit.psi:.3f} rad")

# %%
# Orthogonal states share the light between them at every plate angle.
a = pol.sweep_qwp(pol.ellipse_to_stokes(light), theta, 0.2, 0.7)
b = pol.sweep_qwp(pol.ellipse_to_stokes(light.orthogonal()), theta, 0.2, 0.7)
print("sum spread:", np.ptp(a + b))

# %%
# A fine-structure doublet viewed through an analyzer matched to one
# component shows only that component.
grid = np.arange(-600.0, 600.5, 1.0)
d = pol.FineStructureDoublet(0.0, 290.0, 100.0, light)
plus = pol.doublet_spectrum(d, pol.transmitting_analyzer(d.component_plus), grid)
minus = pol.doublet_spectrum(d, pol.transmitting_analyzer(d.component_minus), grid)
print("peak separation:", grid[np.argmax(plus)] - grid[np.argmax(minus)], "ueV")
