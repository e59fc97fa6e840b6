"""
Simulating the biexciton cascade
================================

The emitter is a three-level chain G -> X -> XX driven by CW pumping or by
pulses.  Each radiative step XX -> X or X -> G emits one photon on its own
line; a detector model then thins, jitters and adds dark counts.
"""
# %%
import numpy as np

from cascadekit import cascade_mc as mc

emitter = mc.EmitterModel(pump=mc.CW(1 / 500))  # default lifetimes 106 ps and 142 ps
ideal = mc.simulate_ideal(emitter, 1e8, seed=1)
print(f"{ideal.lines.size} emissions in 100 us")

# %%
# Each photon records when its level was entered, so dwell times are exact.
dwell = ideal.times - ideal.entered
for line, name in ((mc.XX_LINE, "XX"), (mc.X_LINE, "X")):
    print(f"mean {name} dwell: {dwell[ideal.lines == line].mean():6.1f} ps")

# %%
# Detected streams: 40 % efficiency, 43.6 ps jitter per detector, dark counts.
det = mc.DetectorModel(efficiency=0.4, irf_sigma_ps=43.6, dark_rate=1e-8, dead_time_ps=20_000)
xx, x = mc.simulate(emitter, {"xx": det, "x": det}, 1e9, seed=1)
print(f"detected: {len(xx)} XX, {len(x)} X")

# %%
# Same seed, same bytes.
again = mc.simulate(emitter, {"xx": det, "x": det}, 1e9, seed=1)
assert again[0] == xx and again[1] == x

# %%
# Pulsed excitation with full capture gives strictly alternating XX, X.
pulsed = mc.EmitterModel(pump=mc.Pulsed(12_500.0, 1.0))
lines = mc.simulate_ideal(pulsed, 12_500.0 * 10, seed=2).lines
print("pulsed line sequence:", "".join("B" if v == mc.XX_LINE else "x" for v in lines))
