"""
Coincidence histograms and g2
=============================

Cross-correlating XX starts with X stops shows the cascade: no X photon
just before an XX photon, and a surplus right after.  Auto-correlating one
line shows antibunching.
"""
# %%
import numpy as np

from cascadekit import cascade_mc as mc
from cascadekit import correlator as corr
from cascadekit import rate_model as rm

em = mc.EmitterModel(pump=mc.CW(1 / 500))
xx, x = mc.simulate(em, None, 1e9, seed=3)

cfg = corr.CorrelationConfig(bin_width_ps=32, tau_max_ps=640)
cross = corr.normalize_cw(corr.cross_correlate(xx, x, cfg))
model = rm.tick_bin_average(lambda t: rm.predict_cross_g2(rm.RateModel(pump=1 / 500), t),
                            cfg.edges)

print(" tau_ps    g2    model")
for tau, g, m in zip(cfg.centers, cross.g2, model):
    print(f"{tau:7.0f} {g:6.3f} {m:6.3f}")

# %%
# HBT auto-correlation of the X line: a random 50:50 split into two arms.
auto = corr.normalize_cw(corr.auto_correlate_hbt(x, cfg, seed=4))
print("auto g2 near zero delay:", np.round(auto.g2[cfg.n_bins // 2 - 1:cfg.n_bins // 2 + 1], 3))

# %%
# Pulsed excitation: compare the zero-delay peak with its neighbours.
pulsed = mc.EmitterModel(pump=mc.Pulsed(12_500.0, 0.9))
pxx, px = mc.simulate(pulsed, None, 12_500.0 * 50_000, seed=5)
pcfg = corr.CorrelationConfig(250, 43_750, period_ps=12_500.0, n_side_peaks=3)
for name, h in (("auto X", corr.auto_correlate_hbt(px, pcfg, seed=6)),
                ("cross", corr.cross_correlate(pxx, px, pcfg))):
    g = corr.normalize_pulsed(h)
    print(f"{name:7s} g2(0) = {g.g2_zero:.3f} +- {g.g2_zero_err:.3f}")
# The cross value approaches 1 / capture_probability for ideal detectors.
