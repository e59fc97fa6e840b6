"""
Rate-equation predictions
=========================

The same three-level chain solved deterministically: populations,
steady state, g2 curves and intensity against pump rate.
"""
# %%
import numpy as np

from cascadekit import rate_model as rm

model = rm.RateModel(gamma_x=1 / 142, gamma_xx=1 / 106, pump=1 / 500)
print("steady state:", rm.steady_state(model))

# %%
# After preparing XX at t = 0, the X population rises then decays.
t = np.array([0.0, 50.0, 100.0, 200.0, 400.0, 800.0])
nx = rm.evolve_many(rm.RateModel(1 / 142, 1 / 106, 0.0), rm.Populations.biexciton(), t)[:, 1]
print("n_X(t):", np.round(nx, 4))

# %%
# Cross g2 is zero for negative delay and jumps to 1/n_X at zero.
tau = np.array([-200.0, -1e-9, 0.0, 100.0, 300.0, 1000.0])
print("cross g2:", np.round(rm.predict_cross_g2(model, tau), 3))
print("auto  g2:", np.round(rm.predict_auto_g2(model, "x", np.abs(tau)), 3) + 0.0)

# %%
# Low-power slopes: linear for X, quadratic for XX.
pumps = np.geomspace(1e-8, 1e-1, 8)
ix, ixx = rm.predict_intensity_vs_power(model, pumps)
for p, a, b in zip(pumps, ix, ixx):
    print(f"P = {p:8.1e}/ps   I_X = {a:9.3e}   I_XX = {b:9.3e}")

# %%
# Instrument response: convolve with the Gaussian system response.
grid = np.arange(-1000.0, 1000.5, 1.0)
smooth = rm.convolve_irf(grid, rm.predict_cross_g2(model, grid) - 1, rm.system_response_sigma(145.0)) + 1
print(f"peak after IRF: {smooth.max():.3f} (bare {rm.predict_cross_g2(model, [0.0])[0]:.3f})")
