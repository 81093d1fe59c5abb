"""
Precision bounds for rotation sensing
=====================================

Compare probe states by their spin covariance and the weighted quantum
Cramer-Rao cost of estimating a rotation axis over a sweep of angles.
"""

import numpy as np

from rotsense import metrology as met
from rotsense.probe_states import anticoherence_report, coherent, king_j2, king_j3, noon, spin_covariance

grid = met.omega_grid()  # 37 angles, 0 to 2 pi

# The Kings of Quantumness are anticoherent to second order: <J> = 0 and an
# isotropic covariance J(J+1)/3, which makes Tr C^-1 as small as allowed.
for name, psi in [("king_j2", king_j2()), ("king_j3", king_j3()), ("noon(2)", noon(2)), ("coherent(2)", coherent(2))]:
    ac = anticoherence_report(psi)
    c = spin_covariance(psi).cov
    try:
        tr = f"{met.inverse_covariance_trace(psi):.4f}"
    except met.DegenerateGeometryError as exc:
        tr = f"singular ({exc})"
    print(f"{name:12s} diag C = {np.round(np.diag(c), 3)}  order1={ac.order1} order2={ac.order2}  Tr C^-1 = {tr}")

print()
print("SU(2) bound 9/[J(J+1)]:", met.su2_bound(2), met.su2_bound(3))

# The best axis information any state can give at one angle is diagonal.
# Averaged over the grid, the weighted trace is 37/[48 J(J+1)].
for j, theta in [(2, 1.13), (3, 2.37)]:
    _, inv = met.fmax_axis(j, theta, grid)
    print(f"J={j}: F_max^-1 = diag({inv[0, 0]:.4f}, {inv[1, 1]:.4f}),",
          f"limit {met.ultimate_weighted_limit_exact(j)} = {met.ultimate_weighted_limit(j, grid):.4f}")

# A NOON state only reaches this limit along special axes.
print()
for j, (t, p) in [(2, (1.11, 3.75)), (3, (2.40, 2.76))]:
    lims = met.noon_axis_limits(j, t, p, grid)
    print(f"NOON J={j} weighted limit, star ring normal along z, x, y:", np.round(lims, 4))
    print(f"King J={j} weighted limit:", round(met.axis_weighted_limit(spin_covariance([king_j2, king_j3][j - 2]()).cov, t, p, grid), 4))
