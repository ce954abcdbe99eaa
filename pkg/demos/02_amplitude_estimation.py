"""
Amplitude estimation on a single qubit
======================================

Load an amplitude with one RY, then read it back through phase
estimation of the Grover operator at growing precision.
"""
import math

import numpy as np

from qgshap.statevector import Circuit, amplitude_estimation, qae_error_bound, ry

a = 0.3
prep = Circuit(1, [ry(0, 2 * math.asin(math.sqrt(a)))])

for m in range(2, 9):
    est = amplitude_estimation(prep, 0, m)
    print(f"m={m}  estimate={est.estimate:.5f}  error={abs(est.estimate - a):.5f}  "
          f"bound={qae_error_bound(m):.5f}  Q calls={est.oracle_calls}")

# the outcome distribution peaks at the two grid points y, 2^m - y nearest to the true phase
est = amplitude_estimation(prep, 0, 5)
top = np.argsort(est.distribution)[::-1][:4]
for y in top:
    print(f"  y={y:2d}  sin^2(pi y/32)={est.grid[y]:.4f}  p={est.distribution[y]:.3f}")

# amplitudes on the grid come back exactly
on_grid = math.sin(math.pi * 3 / 16) ** 2
exact = amplitude_estimation(Circuit(1, [ry(0, 2 * math.asin(math.sqrt(on_grid)))]), 0, 4)
print("grid amplitude", on_grid, "->", exact.estimate)
