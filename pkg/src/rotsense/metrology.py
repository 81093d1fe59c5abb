"""Quantum Fisher information for rotation sensing.

Parameters are always ordered ``(omega, Theta, Phi)``.  The QFIM of a pure
probe factorizes as ``Q = 4 H^T C H``, where ``C`` is the spin covariance of
the probe and the columns of ``H`` are the generator vectors
``h_omega, h_Theta, h_Phi``; the generator of parameter ``k`` is
``G_k = J . h_k = i R^dag d_k R``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .probe_states import mean_spin, spin_covariance
from .spin_algebra import SpinLike, SpinState, as_spin, axis_vector, spin_component

PARAM_NAMES = ("omega", "Theta", "Phi")
AXIS_PARAMS = (1, 2)
SINGULAR_RTOL = 1e-10
SATURABILITY_TOL = 1e-10


class DegenerateGeometryError(ValueError):
    """Information matrix is singular: some parameter cannot be identified."""

    def __init__(self, message: str, parameters: Sequence[str] = ()):
        super().__init__(message)
        self.parameters = tuple(parameters)


def omega_grid(steps: int = 36) -> np.ndarray:
    """``steps + 1`` equally spaced angles covering [0, 2pi], endpoints included."""
    return np.arange(steps + 1) * (2.0 * np.pi / steps)


@dataclass(frozen=True, eq=False)
class HMatrix:
    """Generator vectors as the columns of a 3x3 matrix."""

    matrix: np.ndarray

    @property
    def h_omega(self) -> np.ndarray:
        return self.matrix[:, 0]

    @property
    def h_theta(self) -> np.ndarray:
        return self.matrix[:, 1]

    @property
    def h_phi(self) -> np.ndarray:
        return self.matrix[:, 2]

    def gram(self) -> np.ndarray:
        return self.matrix.T @ self.matrix


@dataclass(frozen=True, eq=False)
class Qfim:
    matrix: np.ndarray

    def block(self, idx: Sequence[int]) -> np.ndarray:
        idx = list(idx)
        return self.matrix[np.ix_(idx, idx)]


def h_matrix(omega: float, Theta: float, Phi: float) -> HMatrix:
    sw, cw = np.sin(omega), np.cos(omega)
    s2 = np.sin(omega / 2) ** 2
    sT, cT = np.sin(Theta), np.cos(Theta)
    sP, cP = np.sin(Phi), np.cos(Phi)
    s2T = np.sin(2 * Theta)
    h_omega = -axis_vector(Theta, Phi)
    h_theta = np.array(
        [
            -sw * cT * cP - cw * sP + sP,
            (cw - 1.0) * cP - sw * cT * sP,
            sw * sT,
        ]
    )
    h_phi = np.array(
        [
            sw * sT * sP + s2 * s2T * cP,
            s2 * s2T * sP - sw * sT * cP,
            -2.0 * s2 * sT**2,
        ]
    )
    return HMatrix(np.column_stack([h_omega, h_theta, h_phi]))


def generators(omega: float, Theta: float, Phi: float, j: SpinLike):
    """``(G_omega, G_Theta, G_Phi)`` with ``G_k = J . h_k``."""
    H = h_matrix(omega, Theta, Phi).matrix
    return tuple(spin_component(j, H[:, k]) for k in range(3))


def qfim(state: SpinState, omega: float, Theta: float, Phi: float) -> Qfim:
    """``4 H^T C H`` for a single trial."""
    H = h_matrix(omega, Theta, Phi).matrix
    C = spin_covariance(state).cov
    Q = 4.0 * H.T @ C @ H
    return Qfim(0.5 * (Q + Q.T))


def generator_covariance_qfim(state: SpinState, omega: float, Theta: float, Phi: float) -> Qfim:
    """``Q_jk = 4 Cov(G_j, G_k)`` evaluated from the generator matrices."""
    psi = state.amps
    gs = [g @ psi for g in generators(omega, Theta, Phi, state.j)]
    mean = np.array([np.vdot(psi, v).real for v in gs])
    second = np.array([[np.vdot(a, b) for b in gs] for a in gs])
    sym = 0.5 * (second + second.T).real
    return Qfim(4.0 * (sym - np.outer(mean, mean)))


def _explain_singularity(vec: np.ndarray, omega: float, Theta: float, idx) -> tuple:
    names = [PARAM_NAMES[i] for i in idx]
    if abs(np.sin(omega / 2)) < 1e-6 and any(i in AXIS_PARAMS for i in idx):
        bad = [n for n in names if n in ("Theta", "Phi")]
        return f"rotation angle omega ~ 0 mod 2pi leaves the axis {bad} unidentifiable", bad
    if abs(np.sin(Theta)) < 1e-6 and 2 in idx:
        return "axis at a pole (Theta in {0, pi}) leaves Phi unidentifiable", ["Phi"]
    worst = names[int(np.argmax(np.abs(vec)))]
    return (
        f"probe spin covariance is singular along the direction probed by {worst}; "
        f"{worst} cannot be estimated with this state",
        [worst],
    )


def checked_inverse(Q: np.ndarray, omega: float = 1.0, Theta: float = 1.0, idx=(0, 1, 2)) -> np.ndarray:
    """Invert an information matrix, raising on (near) singularity."""
    evals, evecs = np.linalg.eigh(0.5 * (Q + Q.T))
    floor = SINGULAR_RTOL * max(np.max(np.abs(evals)), 1e-300)
    if evals[0] <= floor:
        msg, bad = _explain_singularity(evecs[:, 0], omega, Theta, list(idx))
        raise DegenerateGeometryError(msg, bad)
    return (evecs / evals) @ evecs.T


def qcrb_weighted_cost(
    state: SpinState,
    omega: float,
    Theta: float,
    Phi: float,
    W: Optional[np.ndarray] = None,
    params: Sequence[int] = (0, 1, 2),
) -> float:
    """Scalar bound ``Tr[W Q^-1]`` on the weighted mean square error.

    ``W`` defaults to the SU(2) metric ``H^T H`` restricted to ``params``.
    """
    idx = list(params)
    Q = qfim(state, omega, Theta, Phi).block(idx)
    if W is None:
        W = h_matrix(omega, Theta, Phi).gram()[np.ix_(idx, idx)]
    Qinv = checked_inverse(Q, omega, Theta, idx)
    return float(np.trace(np.asarray(W) @ Qinv))


def inverse_covariance_trace(state: SpinState) -> float:
    """``Tr[C^-1]``; bounded below by ``9 / [J(J+1)]``."""
    C = spin_covariance(state).cov
    evals = np.linalg.eigvalsh(C)
    if evals[0] <= SINGULAR_RTOL * max(evals[-1], 1e-300):
        raise DegenerateGeometryError(
            "spin covariance is singular: the probe cannot sense all three rotation parameters",
            PARAM_NAMES,
        )
    return float(np.sum(1.0 / evals))


def su2_bound(j: SpinLike) -> float:
    j = as_spin(j).j
    return 9.0 / (j * (j + 1.0))


def fmax_single(j: SpinLike, Theta: float, omega: float) -> np.ndarray:
    """Optimal axis-only information ``(4J(J+1)/3) sin^2(w/2) diag(4, 4 sin^2 Theta)``."""
    jj = as_spin(j).j
    pref = 4.0 * jj * (jj + 1.0) / 3.0 * np.sin(omega / 2.0) ** 2
    return pref * np.diag([4.0, 4.0 * np.sin(Theta) ** 2])


def fmax_axis(j: SpinLike, Theta: float, omega_list) -> tuple:
    """Mean of ``fmax_single`` over ``omega_list`` and its inverse."""
    omegas = np.atleast_1d(np.asarray(omega_list, dtype=float))
    if omegas.size == 0:
        raise ValueError("omega_list must be non-empty")
    if np.all(np.abs(np.sin(omegas / 2.0)) < 1e-12):
        raise DegenerateGeometryError("all rotation angles vanish: the axis is unidentifiable", ("Theta", "Phi"))
    F = np.mean([fmax_single(j, Theta, w) for w in omegas], axis=0)
    return F, checked_inverse(F, np.pi, Theta, AXIS_PARAMS)


def weighted_trace(F_inv: np.ndarray, Theta: float) -> float:
    """``Tr(g F^-1)`` with the sphere metric ``g = diag(1, sin^2 Theta)``."""
    F_inv = np.asarray(F_inv)
    return float(F_inv[0, 0] + np.sin(Theta) ** 2 * F_inv[1, 1])


def ultimate_weighted_limit(j: SpinLike, omega_list) -> float:
    """``Tr[g Fmax^-1] = 3 / (8 J(J+1) <sin^2(w/2)>)``; independent of the axis."""
    jj = as_spin(j).j
    mean_s2 = float(np.mean(np.sin(np.asarray(omega_list, dtype=float) / 2.0) ** 2))
    if mean_s2 == 0.0:
        raise DegenerateGeometryError("all rotation angles vanish", ("Theta", "Phi"))
    return 3.0 / (8.0 * jj * (jj + 1.0) * mean_s2)


def grid_mean_sin2(steps: int) -> Fraction:
    """Exact mean of ``sin^2(w/2)`` over ``omega_grid(steps)``.

    ``sum_{k<n} sin^2(k pi / n) = n/2`` for n >= 2 and the closing point adds 0.
    """
    if steps < 2:
        raise ValueError("need at least two steps")
    return Fraction(steps, 2 * (steps + 1))


def ultimate_weighted_limit_exact(j: SpinLike, steps: int = 36) -> Fraction:
    jf = Fraction(as_spin(j).two_j, 2)
    return Fraction(3) / (8 * jf * (jf + 1) * grid_mean_sin2(steps))


def axis_weighted_limit(cov: np.ndarray, Theta: float, Phi: float, omega_list) -> float:
    """Axis-only weighted bound ``Tr[g Qbar^-1]`` for a given spin covariance.

    ``Qbar`` is the (Theta, Phi) block of ``4 H^T C H`` averaged over the
    rotation angles, the same averaging used for ``fmax_axis``.
    """
    cov = np.asarray(cov, dtype=float)
    blocks = []
    for w in np.asarray(omega_list, dtype=float):
        H = h_matrix(w, Theta, Phi).matrix[:, 1:]
        blocks.append(4.0 * H.T @ cov @ H)
    Qbar = np.mean(blocks, axis=0)
    return weighted_trace(checked_inverse(Qbar, 1.0, Theta, AXIS_PARAMS), Theta)


def noon_covariances(j: SpinLike) -> list:
    """Spin covariances of NOON states aligned with z, x and y (valid for J >= 3/2)."""
    jj = as_spin(j).j
    base = [jj / 2.0, jj / 2.0, jj**2]
    return [np.diag(np.roll(base, s)) for s in (0, 1, 2)]


def noon_axis_limits(j: SpinLike, Theta: float, Phi: float, omega_list) -> list:
    return [axis_weighted_limit(c, Theta, Phi, omega_list) for c in noon_covariances(j)]


def commutator_expectations(state: SpinState, omega: float, Theta: float, Phi: float) -> np.ndarray:
    """Real antisymmetric matrix ``<[G_j, G_k]> / i``, via ``[J.a, J.b] = i J.(a x b)``."""
    H = h_matrix(omega, Theta, Phi).matrix
    m = mean_spin(state)
    out = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            out[a, b] = float(np.dot(m, np.cross(H[:, a], H[:, b])))
    return out


def saturability_check(state: SpinState, tol: float = SATURABILITY_TOL) -> bool:
    """True when all generator commutators have vanishing expectation at every rotation.

    Since ``<[G_j, G_k]> = i <J> . (h_j x h_k)`` and the cross products span
    all directions as the rotation varies, this holds iff ``<J> = 0``.
    """
    return bool(np.linalg.norm(mean_spin(state)) < tol)
