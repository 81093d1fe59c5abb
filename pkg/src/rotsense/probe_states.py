"""Probe states and their polarization properties."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .spin_algebra import (
    Direction,
    RotationParams,
    SpinLike,
    SpinState,
    angular_momentum_ops,
    as_spin,
    coherent_state,
    majorana_constellation,
    rotation_operator,
)

ANTICOHERENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpinCovariance:
    """First and second moments of the spin vector in a pure state."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class AnticoherenceReport:
    order1: bool
    order2: bool
    isotropy_defect: float

    def __iter__(self):
        return iter((self.order1, self.order2, self.isotropy_defect))


def king_j2() -> SpinState:
    """Tetrahedral King of quantumness, ``(sqrt2 |2,-1> + |2,2>)/sqrt3``."""
    amps = np.zeros(5, dtype=complex)
    amps[0] = 1.0 / np.sqrt(3.0)  # m = 2
    amps[3] = np.sqrt(2.0 / 3.0)  # m = -1
    return SpinState(as_spin(2), amps)


def king_j3() -> SpinState:
    """Spin-3 King, ``(|3,-2> - |3,2>)/sqrt2``."""
    amps = np.zeros(7, dtype=complex)
    amps[1] = -1.0 / np.sqrt(2.0)  # m = 2
    amps[5] = 1.0 / np.sqrt(2.0)  # m = -2
    return SpinState(as_spin(3), amps)


def noon(j: SpinLike) -> SpinState:
    """``(|J,J> - |J,-J>)/sqrt2``."""
    j = as_spin(j)
    if j.two_j == 0:
        raise ValueError("NOON state needs J > 0")
    amps = np.zeros(j.dim(), dtype=complex)
    amps[0] = 1.0 / np.sqrt(2.0)
    amps[-1] = -1.0 / np.sqrt(2.0)
    return SpinState(j, amps)


def coherent(j: SpinLike, theta: float = 0.0, phi: float = 0.0) -> SpinState:
    return coherent_state(j, Direction(theta, phi))


def mean_spin(state: SpinState) -> np.ndarray:
    psi = state.amps
    return np.array([np.vdot(psi, op @ psi).real for op in angular_momentum_ops(state.j)])


def spin_covariance(state: SpinState) -> SpinCovariance:
    """Symmetrized covariance ``1/2 <J_a J_b + J_b J_a> - <J_a><J_b>``."""
    psi = state.amps
    vecs = [op @ psi for op in angular_momentum_ops(state.j)]
    mean = np.array([np.vdot(psi, v).real for v in vecs])
    # <J_a J_b> = <J_a psi | J_b psi> for Hermitian J_a
    second = np.array([[np.vdot(a, b) for b in vecs] for a in vecs])
    cov = second.real - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    return SpinCovariance(mean=mean, cov=cov)


def anticoherence_report(state: SpinState, tol: float = ANTICOHERENCE_TOL) -> AnticoherenceReport:
    sc = spin_covariance(state)
    iso = sc.cov - np.trace(sc.cov) / 3.0 * np.eye(3)
    defect = float(np.linalg.norm(iso))
    order1 = bool(np.linalg.norm(sc.mean) < tol)
    order2 = order1 and defect < tol
    return AnticoherenceReport(order1, order2, defect)


def _frame(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    e1 = a / np.linalg.norm(a)
    e2 = b - np.dot(b, e1) * e1
    e2 /= np.linalg.norm(e2)
    return np.column_stack([e1, e2, np.cross(e1, e2)])


def _so3_to_params(m: np.ndarray) -> RotationParams:
    """Params whose spin operator induces the SO(3) matrix ``m``.

    ``rotation_operator(omega, u)`` turns states by ``-omega`` about ``u``,
    so a geometric turn by ``alpha`` about ``v`` is ``omega = alpha`` about ``-v``.
    """
    cos_a = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    alpha = float(np.arccos(cos_a))
    if alpha < 1e-12:
        return RotationParams(0.0, 0.0, 0.0)
    if np.pi - alpha < 1e-6:
        # axis from the symmetric part for half turns
        s = (m + np.eye(3)) / 2.0
        v = s[np.argmax(np.diag(s))]
        v = v / np.linalg.norm(v)
    else:
        v = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
        v = v / (2.0 * np.sin(alpha))
    return RotationParams.from_axis_angle(alpha, -v)


def stabilizer(state: SpinState, tol: float = 1e-8) -> list:
    """Rotations leaving ``state`` invariant up to a global phase.

    Candidates map one non-collinear pair of Majorana stars onto every other
    pair with the same opening angle; each is kept if ``|<psi|R|psi>| = 1``.
    Returns the identity first.  Raises ``ValueError`` when the stars are all
    collinear, because the symmetry group is then continuous.
    """
    vecs = majorana_constellation(state).vectors()
    pair = None
    for a, b in permutations(range(len(vecs)), 2):
        if np.linalg.norm(np.cross(vecs[a], vecs[b])) > 1e-3:
            pair = (a, b)
            break
    if pair is None:
        raise ValueError("collinear constellation: continuous symmetry group")
    a, b = pair
    ref = _frame(vecs[a], vecs[b])
    target = float(np.dot(vecs[a], vecs[b]))

    found = [RotationParams(0.0, 0.0, 0.0)]
    mats = [np.eye(3)]
    for c, d in permutations(range(len(vecs)), 2):
        if abs(np.dot(vecs[c], vecs[d]) - target) > 1e-4:
            continue
        if np.linalg.norm(np.cross(vecs[c], vecs[d])) < 1e-3:
            continue
        m = _frame(vecs[c], vecs[d]) @ ref.T
        if any(np.allclose(m, q, atol=1e-6) for q in mats):
            continue
        p = _so3_to_params(m)
        r = rotation_operator(state.j, p.omega, p.axis())
        if abs(abs(np.vdot(state.amps, r @ state.amps)) - 1.0) < tol:
            mats.append(m)
            found.append(p)
    return found
