"""
Full rotation estimates and Majorana stars
==========================================

Estimate angle and axis of single rotations, score them by the deviation
angle modulo the probe's symmetry group, and look at the constellations that
explain why some rotations cannot be told apart.
"""

import numpy as np

from rotsense import estimation as est
from rotsense.measurement import default_protocol, husimi_samples
from rotsense.probe_states import king_j2, king_j3, stabilizer
from rotsense.spin_algebra import RotationParams, majorana_constellation

protocol = default_protocol()
rng = np.random.default_rng(3)

for probe in (king_j2(), king_j3()):
    stars = majorana_constellation(probe).vectors()
    sym = stabilizer(probe)
    print(f"J={probe.j.j:g}: {len(stars)} stars, stabilizer of order {len(sym)}")
    print(np.round(stars, 3) + 0.0)
    for _ in range(4):
        v = rng.normal(size=3)
        truth = RotationParams.from_axis_angle(rng.uniform(0.4, 5.9), v / np.linalg.norm(v))
        q = husimi_samples(probe.rotate(truth.omega, truth.axis()), protocol)
        fit = est.estimate_rotation(q, probe, protocol)
        d = est.deviation_angle(truth, fit.params, probe.j, symmetries=sym)
        print(f"  truth {np.round(truth.as_array(), 3)}  estimate {np.round(fit.params.as_array(), 3)}"
              f"  Delta = {d:.2e}")
        # a large Delta with the same likelihood as the truth is a true ambiguity
        ll_true = est.rotation_log_likelihood(q, truth, probe, protocol)
        print(f"    log-likelihood at estimate {fit.log_likelihood:.9f}, at truth {ll_true:.9f}")
    print()

# Uninformed guesses land pi/2 away on average
rels = [est.deviation_angle(RotationParams(0, 0, 0), RotationParams(w, 1.0, 0.5), 2) for w in rng.uniform(0, 2 * np.pi, 2000)]
print("mean Delta of random guesses / (pi/2):", round(np.mean(rels) / (np.pi / 2), 3))
