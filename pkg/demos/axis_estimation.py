"""
Estimating a rotation axis from Husimi samples
==============================================

Rotate a King state about a fixed axis through every angle of the grid,
record noisy detector powers, and recover the axis by maximum likelihood.
"""

import numpy as np

from rotsense import estimation as est
from rotsense import metrology as met
from rotsense.measurement import DetectionModel, calibrate_and_project, default_protocol, records_to_arrays, simulate_powers
from rotsense.probe_states import king_j2
from rotsense.spin_algebra import RotationParams

probe = king_j2()
protocol = default_protocol()  # north, south, +y, +x and (sqrt2 x + y)/sqrt3
grid = met.omega_grid()
theta, phi = 1.11, 3.75

# Bench-like detection: random efficiencies, 1% power noise, 50 readings each
model = DetectionModel.bench(seed=1)
raw = simulate_powers(probe, [RotationParams(w, theta, phi) for w in grid], protocol, model)
q, std = records_to_arrays(calibrate_and_project(raw))
print("first rows of Q (five directions):")
print(np.round(q[:4], 4))

fit = est.estimate_axis(q, grid, probe, protocol)
print(f"\ntruth    Theta={theta:.4f} Phi={phi:.4f}")
print(f"estimate Theta={fit.theta_hat:.4f} Phi={fit.phi_hat:.4f}")

# The observed Fisher information of the projections, against the best any
# measurement could do at the estimated polar angle
F_inv = fit.fisher.inverse
_, fmax_inv = met.fmax_axis(probe.j, fit.theta_hat, grid)
print("std from observed Fisher:", np.sqrt(np.diag(F_inv)).round(4))
print("ratio to the quantum limit:", np.sqrt(np.diag(F_inv) / np.diag(fmax_inv)).round(3))
print("weighted uncertainty:", round(est.weighted_uncertainty(F_inv, fit.theta_hat), 4),
      "limit:", round(met.ultimate_weighted_limit(probe.j, grid), 4))
