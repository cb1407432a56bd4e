"""Bridges from 0 back to 0: the empirical density against the semicircle.

Run ``python demos/watermelon.py``.  Takes well under a minute.
"""
import numpy as np

from nibridge import burgers, measures, sde

N, SAMPLES, T = 32, 100, 0.5

# all particles start and end at the origin; at time t the cloud is a
# semicircle of radius 2 sqrt(t (1 - t))
shape = burgers.watermelon_shape([0.25, T, 0.75])
spec = sde.BridgeSpec(n=N, a=0.0, b=0.0, record_times=(0.25, T, 0.75), drift_mode="exact",
                      samples=SAMPLES, seed=1)
exact = sde.simulate_bridge(spec)
meanfield = sde.simulate_meanfield(spec, shape)

for t in (0.25, T, 0.75):
    target = shape.density_at(t)
    radius = 2 * np.sqrt(t * (1 - t))
    for name, ens in (("exact", exact), ("mean-field", meanfield)):
        x = ens.slice(t).ravel()
        w1 = measures.wasserstein1(measures.empirical(x), target)
        print(f"t={t:.2f}  {name:10s}  W1 to semicircle {w1:.4f}   "
              f"mean extreme {ens.slice(t)[:, -1].mean():+.3f} (edge {radius:.3f})")

# for b = 0 the two drifts coincide, so both samplers print the same paths.
# the top particle sits below the edge by about 1.77 (s n)^(-2/3), s = 2^(3/2) at t=1/2
