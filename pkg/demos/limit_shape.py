"""A limit shape with no closed form: semicircle(2) at t=0 to uniform(-1, 3) at t=1.

Run ``python demos/limit_shape.py``.
"""
import numpy as np

from nibridge import burgers, measures

times = np.linspace(0.0, 1.0, 11)
shape = burgers.solve_characteristics(measures.semicircle(2.0), measures.uniform(-1.0, 3.0), times)

print("  t     left    right    s_left   s_right   mean")
for t in times:
    d = shape.density_at(t)
    (a, sa), (b, sb) = shape.edge_at(t, "left"), shape.edge_at(t, "right")
    mean = np.trapezoid(d.grid * d.values, d.grid)
    print(f"{t:4.1f}  {a:+.3f}  {b:+.3f}  {sa:8.3f}  {sb:8.3f}  {mean:+.3f}")

# the mean drifts linearly from 0 to 1; the edges need not.  s is nan at t=1:
# a uniform density has a hard edge, not a square-root one
print(shape.diagnostics)
