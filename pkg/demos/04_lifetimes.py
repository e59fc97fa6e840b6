"""
Lifetimes from transients
=========================

Decay histograms are modelled as sums of exponentials convolved with a
Gaussian system response.  Fits run on Poisson-weighted residuals.
"""
# %%
import numpy as np

from cascadekit import decayfit as df
from cascadekit import pipelines as pl

rng = np.random.default_rng(0)
t = np.arange(-1000.0, 30_000.0, 8.0) + 4.0
truth = df.DecayModel(((20.0, 106.0), (1.0, 4600.0)), t0_ps=500.0, irf_sigma_ps=pl.SIGMA_SYS)
mu = df.model_value(truth, t)
counts = rng.poisson(mu * 1e6 / mu.sum())

fit = pl.fit_two_component(t, counts)
for k in ("tau0", "tau1"):
    print(f"{k}: {fit.parameters[k]:8.1f} +- {fit.uncertainties[k]:.1f} ps")
print(f"reduced chi2: {fit.reduced_chi2:.3f}")

# %%
# Same idea on simulated photons: fold the XX line on the laser period.
mc_fit = pl.run_mc_transient(seed=1, n_pulses=100_000, line="xx")
print(f"Monte Carlo XX lifetime: {mc_fit.parameters['tau0']:.1f} ps")

# %%
# Power-law exponents: slope of log intensity against log pump.
p = np.geomspace(1e-3, 1e-1, 10)
print("k =", round(df.fit_power_law(p, 5 * p**1.4)[0], 6))
