"""Top particle of the watermelon, rescaled, against Tracy-Widom (beta = 2).

Run ``python demos/edge_fluctuations.py``.  A few minutes on one core.
"""
import numpy as np

from nibridge import airy, burgers, sde, stats

N, SAMPLES, T = 32, 500, 0.5

shape = burgers.watermelon_shape([T])
spec = sde.BridgeSpec(n=N, a=0.0, b=0.0, record_times=(T,), drift_mode="meanfield",
                      samples=SAMPLES, seed=7)
ens = sde.simulate_meanfield(spec, shape)

# eta = (s n)^(2/3) (x_n - edge) with s the square-root coefficient of the density
edge = stats.edge_statistics(ens, shape, T, "right")
table = airy.default_table()
mean, var = table.moments()
print("edge", edge.edge, "s", edge.s)
print(f"sample mean {edge.eta.mean():+.3f}  TW2 mean {mean:+.3f}")
print(f"sample var  {edge.eta.var():.3f}  TW2 var  {var:.3f}")
print(f"KS distance {stats.ks_distance(edge.eta, table):.3f}")

# a crude text histogram next to the TW2 density
bins = np.linspace(-5, 2, 15)
hist, _ = np.histogram(edge.eta, bins=bins, density=True)
mid = 0.5 * (bins[1:] + bins[:-1])
dens = np.gradient(table(table.s_grid), table.s_grid)
for m, h in zip(mid, hist):
    ref = np.interp(m, table.s_grid, dens)
    print(f"{m:+5.2f} {'#' * int(60 * h):<30s} {ref:.3f}")
