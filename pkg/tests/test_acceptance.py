"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line that is printed in the terminal
summary, then asserts.  Criteria 6 and 8 are known to fail in part; see the
README for the numbers.
"""
import time
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from rotsense import cli
from rotsense import estimation as est
from rotsense import metrology as met
from rotsense.measurement import (
    DetectionModel,
    calibrate_and_project,
    default_protocol,
    records_to_arrays,
    simulate_powers,
)
from rotsense.probe_states import coherent, king_j2, king_j3, noon, spin_covariance, stabilizer
from rotsense.spin_algebra import (
    Direction,
    RotationParams,
    SpinState,
    axis_vector,
    coherent_state,
    majorana_constellation,
    rotation_operator,
)

from conftest import ACCEPTANCE_LINES, random_state, random_unit

GRID = met.omega_grid()
PROT = default_protocol()
AXES = {2: (1.11, 3.75), 3: (2.40, 2.76)}
KINGS = {2: king_j2, 3: king_j3}


def _record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_01_fmax():
    t0 = time.perf_counter()
    _, inv2 = met.fmax_axis(2, 1.13, GRID)
    _, inv3 = met.fmax_axis(3, 2.37, GRID)
    dt = time.perf_counter() - t0
    ref2 = np.array([[0.0642, 0], [0, 0.0786]])
    ref3 = np.array([[0.0321, 0], [0, 0.0666]])
    e2, e3 = np.abs(inv2 - ref2).max(), np.abs(inv3 - ref3).max()
    ok = e2 < 1e-3 and e3 < 1e-3 and dt < 1.0
    _record(1, ok, f"F_max^-1 errors {e2:.2e} (J=2), {e3:.2e} (J=3), {dt * 1e3:.1f} ms")


def test_criterion_02_ultimate_limit():
    exact = {j: met.ultimate_weighted_limit_exact(j) for j in (2, 3)}
    num = {j: met.ultimate_weighted_limit(j, GRID) for j in (2, 3)}
    ok = exact[2] == Fraction(37, 288) and exact[3] == Fraction(37, 576)
    ok &= abs(num[2] - 0.1285) < 5e-5 and abs(num[3] - 0.0642) < 5e-5
    ok &= round(num[2], 2) == 0.13 and round(num[3], 3) == 0.064
    _record(2, ok, f"limits {exact[2]} = {num[2]:.4f}, {exact[3]} = {num[3]:.4f}")


def test_criterion_03_kings_optimal():
    tr2 = met.inverse_covariance_trace(king_j2())
    tr3 = met.inverse_covariance_trace(king_j3())
    ok = abs(tr2 - 1.5) < 1e-10 and abs(tr3 - 0.75) < 1e-10
    singular = []
    for psi in (coherent(2), coherent(3, 0.7, 1.9)):
        try:
            met.inverse_covariance_trace(psi)
            singular.append(False)
        except met.DegenerateGeometryError:
            singular.append(True)
    ok &= all(singular)
    _record(3, ok, f"Tr C^-1 = {tr2:.12g}, {tr3:.12g}; coherent C singular: {all(singular)}")


def test_criterion_04_gram_identity(rng):
    worst = 0.0
    for w, t, p in zip(rng.uniform(0, 2 * np.pi, 10**4), rng.uniform(0, np.pi, 10**4), rng.uniform(0, 2 * np.pi, 10**4)):
        s2 = np.sin(w / 2) ** 2
        ref = np.diag([1.0, 4 * s2, 4 * s2 * np.sin(t) ** 2])
        worst = max(worst, np.abs(met.h_matrix(w, t, p).gram() - ref).max())
    _record(4, worst < 1e-12, f"max |H^T H - diag| = {worst:.2e} over 10^4 draws")


def test_criterion_05_qfim_forms(rng):
    worst = 0.0
    for _ in range(100):
        psi = random_state(rng, rng.choice([1, 1.5, 2, 2.5, 3]))
        w, t, p = rng.uniform(0, 2 * np.pi), rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
        a = met.qfim(psi, w, t, p).matrix
        b = met.generator_covariance_qfim(psi, w, t, p).matrix
        worst = max(worst, np.abs(a - b).max())
    fd_worst = 0.0
    step = 1e-6
    for j in (0.5, 1, 2, 3):
        for _ in range(5):
            x = np.array([rng.uniform(0.2, 6.0), rng.uniform(0.2, 2.9), rng.uniform(0, 6)])
            R = lambda y: rotation_operator(j, y[0], axis_vector(y[1], y[2]))
            gens = met.generators(*x, j)
            for k in range(3):
                e = np.zeros(3)
                e[k] = step
                fd = 1j * R(x).conj().T @ (R(x + e) - R(x - e)) / (2 * step)
                fd_worst = max(fd_worst, np.abs(gens[k] - fd).max())
    ok = worst < 1e-10 and fd_worst < 1e-6
    _record(5, ok, f"product vs covariance form {worst:.2e}; generators vs finite differences {fd_worst:.2e}")


def test_criterion_06_noon():
    cov_err = max(np.abs(spin_covariance(noon(j)).cov - np.diag([j / 2, j / 2, j**2])).max() for j in (2, 3))
    lim2 = met.noon_axis_limits(2, *AXES[2], GRID)
    lim3 = met.noon_axis_limits(3, *AXES[3], GRID)
    in2 = [0.18 <= v <= 0.22 for v in lim2]
    in3 = [0.10 <= v <= 0.14 for v in lim3]
    ok = cov_err < 1e-12 and any(in2) and any(in3)
    fmt = lambda vs: ", ".join(f"{v:.3f}" for v in vs)
    _record(
        6,
        ok,
        f"covariance error {cov_err:.1e}; weighted cost (z, x, y) J=2 [{fmt(lim2)}] vs [0.18, 0.22], "
        f"J=3 [{fmt(lim3)}] vs [0.10, 0.14]",
    )


def _chords(vecs):
    return np.array([np.linalg.norm(a - b) for a, b in combinations(vecs, 2)])


def test_criterion_07_constellations(rng):
    checks = {}
    n = Direction(1.2, 0.4)
    for j in (1, 2, 3):
        v = majorana_constellation(coherent_state(j, n)).vectors()
        checks.setdefault("coherent", []).append(len(v) == 2 * j and np.allclose(v, -n.unit_vector(), atol=1e-2))
    for j, m in ((2, 1), (2, -2), (3, 0), (3, 2)):
        pts = majorana_constellation(SpinState.basis(j, m)).points
        north = sum(np.isclose(p.theta, 0.0) for p in pts)
        south = sum(np.isclose(p.theta, np.pi) for p in pts)
        checks.setdefault("basis", []).append((north, south) == (j - m, j + m))
    gap_err = 0.0
    for j in (1, 2, 3, 4):
        pts = majorana_constellation(noon(j)).points
        phis = np.sort([p.phi for p in pts])
        gaps = np.diff(np.append(phis, phis[0] + 2 * np.pi))
        gap_err = max(gap_err, np.abs(gaps - np.pi / j).max(), max(abs(p.theta - np.pi / 2) for p in pts))
    checks["noon"] = [gap_err < 1e-8]
    chords = _chords(majorana_constellation(king_j2()).vectors())
    spread = chords.max() - chords.min()
    checks["tetrahedron"] = [len(chords) == 6 and spread < 1e-6]
    ok = all(all(v) for v in checks.values())
    bad = [k for k, v in checks.items() if not all(v)]
    _record(7, ok, f"NOON gap error {gap_err:.1e}, tetrahedron chord spread {spread:.1e}" + (f"; failed {bad}" if bad else ""))


def _noiseless_q(probe, rotations):
    raw = simulate_powers(probe, rotations, PROT, DetectionModel.ideal())
    return records_to_arrays(calibrate_and_project(raw))[0]


@pytest.mark.slow
def test_criterion_08_noiseless_inversion():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    results, notes = {}, []
    for j, make in KINGS.items():
        probe = make()
        sym = stabilizer(probe)
        rots = [RotationParams.from_axis_angle(rng.uniform(np.pi / 9, 17 * np.pi / 9), random_unit(rng)) for _ in range(100)]
        q = _noiseless_q(probe, rots)
        deltas, tied = [], 0
        for r, qq in zip(rots, q):
            fit = est.estimate_rotation(qq, probe, PROT)
            d = est.deviation_angle(r, fit.params, j, symmetries=sym)
            deltas.append(d)
            # a miss that explains the data perfectly is a genuine ambiguity
            pos = qq[qq > 0]
            ceiling = float(np.sum(pos * np.log(pos / qq.sum())))
            tied += d >= 1e-3 and ceiling - fit.log_likelihood < 1e-9
        good = int(np.sum(np.array(deltas) < 1e-3))
        results[f"full J={j}"] = good == len(rots)
        notes.append(f"full J={j} {good}/100 with Delta < 1e-3" + (f" ({tied} misses fit the data exactly)" if tied else ""))

        theta, phi = AXES[j]
        qa = _noiseless_q(probe, [RotationParams(w, theta, phi) for w in GRID])
        fit = est.estimate_axis(qa, GRID, probe, PROT, with_fisher=False)
        err = max(abs(fit.theta_hat - theta), abs(fit.phi_hat - phi))
        results[f"axis J={j}"] = err < 1e-3
        notes.append(f"axis J={j} error {err:.1e}")
    dt = time.perf_counter() - t0
    ok = all(results.values()) and dt < 300
    _record(8, ok, "; ".join(notes) + f"; {dt:.0f} s")


@pytest.mark.slow
def test_criterion_09_bench_envelope():
    bench = cli._detection_dict(DetectionModel.bench())
    notes, ok = [], True
    for j, name in ((2, "king_j2"), (3, "king_j3")):
        probe = KINGS[j]()
        sym = stabilizer(probe)
        theta, phi = AXES[j]
        ratios = []
        for rep in range(50):
            cfg = cli.ExperimentConfig(mode="axis", probe=name, detection=bench, seed=rep)
            ratios.append(cli.run_axis_experiment(cfg).values["std_ratios"])
        ratios = np.array(ratios)
        lo, hi = ratios.min(), ratios.max()
        deltas = []
        for rep in range(50):
            rot = RotationParams(GRID[2 + rep % 33], theta, phi)
            raw = simulate_powers(probe, [rot], PROT, DetectionModel.bench(seed=rep))
            q, s = records_to_arrays(calibrate_and_project(raw))
            fit = est.estimate_rotation(q[0], probe, PROT, q_std=s[0])
            deltas.append(est.deviation_angle(rot, fit.params, j, symmetries=sym))
        mean = float(np.mean(deltas))
        ok &= 1.0 <= lo and hi <= 5.0 and mean < 0.6 * np.pi / 2
        notes.append(
            f"J={j} std ratios in [{lo:.2f}, {hi:.2f}] (mean {ratios.mean(axis=0)[0]:.2f}/{ratios.mean(axis=0)[1]:.2f}), "
            f"mean Delta {mean:.3f} < {0.6 * np.pi / 2:.3f}"
        )
    _record(9, ok, "; ".join(notes))


_PAULI = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]


def _compose(a, b):
    # U = cos(w/2) + i sin(w/2) n.sigma in the spin-1/2 lift
    U = rotation_operator(0.5, a.omega, a.axis()) @ rotation_operator(0.5, b.omega, b.axis())
    v = np.array([np.trace(U @ s).imag / 2 for s in _PAULI])
    w = 2 * np.arctan2(np.linalg.norm(v), np.trace(U).real / 2)
    return RotationParams.from_axis_angle(w, v / np.linalg.norm(v))


@pytest.mark.slow
def test_criterion_10_deviation_statistics():
    rng = np.random.default_rng(10)
    n = 10**5
    total = 0.0
    for _ in range(n):
        a = RotationParams.from_axis_angle(rng.uniform(0, 2 * np.pi), random_unit(rng))
        b = RotationParams.from_axis_angle(rng.uniform(0, 2 * np.pi), random_unit(rng))
        # an uninformed estimate: the truth followed by a random extra turn
        total += est.deviation_angle(a, _compose(a, b), 2)
    mean = total / n
    a = RotationParams(1.0, 0.7, 2.0)
    self_err = est.deviation_angle(a, a, 2)
    offset_err = max(
        abs(est.deviation_angle(a, RotationParams(a.omega + d, a.theta_axis, a.phi_axis), j) - d)
        for j in (1, 2, 3)
        for d in (1e-3, 0.25, 1.5, 3.0)
    )
    ok = abs(mean / (np.pi / 2) - 1) < 0.01 and self_err < 1e-7 and offset_err < 1e-9
    _record(10, ok, f"mean Delta / (pi/2) = {mean / (np.pi / 2):.4f}; Delta(A,A) = {self_err:.1e}; offset error {offset_err:.1e}")
