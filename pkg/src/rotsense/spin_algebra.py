"""Finite-dimensional spin-J algebra.

Everything here works in the angular-momentum basis ordered by descending
magnetic number: index ``k`` holds ``m = J - k``.  Rotations follow the
convention ``R(omega, u) = exp(+i omega J.u)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Sequence, Union

import numpy as np

TWO_PI = 2.0 * np.pi

# relative magnitude below which a polynomial coefficient counts as zero
ROOT_COEFF_TOL = 1e-12


@dataclass(frozen=True)
class SpinQuantum:
    """Spin quantum number stored as the integer ``2J``."""

    two_j: int

    def __post_init__(self):
        if int(self.two_j) != self.two_j or self.two_j < 0:
            raise ValueError(f"two_j must be a non-negative integer, got {self.two_j!r}")
        object.__setattr__(self, "two_j", int(self.two_j))

    @classmethod
    def from_j(cls, j: Union[int, float, Fraction, "SpinQuantum"]) -> "SpinQuantum":
        if isinstance(j, SpinQuantum):
            return j
        two_j = 2 * Fraction(j).limit_denominator(2)
        if two_j.denominator != 1 or abs(float(two_j) - 2 * float(j)) > 1e-12:
            raise ValueError(f"J must be an integer or half-integer, got {j!r}")
        return cls(int(two_j))

    @property
    def j(self) -> float:
        return self.two_j / 2

    @property
    def is_integer(self) -> bool:
        return self.two_j % 2 == 0

    def dim(self) -> int:
        return self.two_j + 1

    def m_values(self) -> np.ndarray:
        """Magnetic numbers in basis order, ``J, J-1, ..., -J``."""
        return self.j - np.arange(self.dim())

    def __str__(self) -> str:
        return str(self.two_j // 2) if self.is_integer else f"{self.two_j}/2"


SpinLike = Union[SpinQuantum, int, float, Fraction]


def as_spin(j: SpinLike) -> SpinQuantum:
    return SpinQuantum.from_j(j)


@dataclass(frozen=True, eq=False)
class SpinState:
    """Pure state of a spin-J system: ``amps[k] = <J, J-k | psi>``."""

    j: SpinQuantum
    amps: np.ndarray

    def __post_init__(self):
        j = as_spin(self.j)
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        if amps.size != j.dim():
            raise ValueError(f"spin {j} needs {j.dim()} amplitudes, got {amps.size}")
        amps.setflags(write=False)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps: Sequence[complex], normalize: bool = True) -> "SpinState":
        amps = np.asarray(amps, dtype=complex)
        state = cls(SpinQuantum(amps.size - 1), amps)
        return state.normalize() if normalize else state

    @classmethod
    def basis(cls, j: SpinLike, m: float) -> "SpinState":
        j = as_spin(j)
        k = int(round(j.j - m))
        if not 0 <= k < j.dim() or abs(j.j - k - m) > 1e-12:
            raise ValueError(f"m={m} is not a valid projection for spin {j}")
        amps = np.zeros(j.dim(), dtype=complex)
        amps[k] = 1.0
        return cls(j, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> "SpinState":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return SpinState(self.j, self.amps / n)

    def amplitude(self, m: float) -> complex:
        k = int(round(self.j.j - m))
        return complex(self.amps[k])

    def overlap(self, other: "SpinState") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amps, other.amps))

    def evolve(self, unitary: np.ndarray) -> "SpinState":
        return SpinState(self.j, unitary @ self.amps)

    def rotate(self, omega: float, axis) -> "SpinState":
        return self.evolve(rotation_operator(self.j, omega, axis))

    def __repr__(self) -> str:
        return f"SpinState(j={self.j}, amps={np.array2string(self.amps, precision=4)})"


@dataclass(frozen=True)
class Direction:
    """Point on the unit sphere in polar (theta) and azimuthal (phi) angles."""

    theta: float
    phi: float = 0.0

    def unit_vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        if r == 0.0:
            raise ValueError("zero vector has no direction")
        theta = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
        phi = float(np.arctan2(v[1], v[0]) % TWO_PI)
        return cls(theta, phi)

    def angle_to(self, other: "Direction") -> float:
        c = float(np.dot(self.unit_vector(), other.unit_vector()))
        return float(np.arccos(np.clip(c, -1.0, 1.0)))


NORTH = Direction(0.0, 0.0)
SOUTH = Direction(np.pi, 0.0)


def axis_vector(theta_axis: float, phi_axis: float) -> np.ndarray:
    st = np.sin(theta_axis)
    return np.array([st * np.cos(phi_axis), st * np.sin(phi_axis), np.cos(theta_axis)])


@dataclass(frozen=True)
class RotationParams:
    """Rotation by ``omega`` about the axis ``u(theta_axis, phi_axis)``."""

    omega: float
    theta_axis: float
    phi_axis: float

    def axis(self) -> np.ndarray:
        return axis_vector(self.theta_axis, self.phi_axis)

    def as_array(self) -> np.ndarray:
        return np.array([self.omega, self.theta_axis, self.phi_axis], dtype=float)

    @classmethod
    def from_axis_angle(cls, omega: float, axis) -> "RotationParams":
        d = Direction.from_vector(axis)
        return cls(float(omega), d.theta, d.phi)

    def reduced(self) -> "RotationParams":
        """Same rotation with ``omega`` in [0, 2pi) and the axis angles in range."""
        d = Direction.from_vector(self.axis())
        return RotationParams(float(self.omega % TWO_PI), d.theta, d.phi)

    def canonical(self) -> "RotationParams":
        """Representative with ``omega`` in [0, pi], using (w, u) ~ (2pi - w, -u).

        For half-integer spin the two representatives differ by a global sign
        of the operator, which no measurement can see.
        """
        r = self.reduced()
        if r.omega <= np.pi:
            return r
        return RotationParams.from_axis_angle(TWO_PI - r.omega, -r.axis())


@dataclass(frozen=True)
class Constellation:
    """The 2J Majorana stars of a pure state, multiplicities expanded."""

    points: tuple

    def __len__(self) -> int:
        return len(self.points)

    def vectors(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 3))
        return np.array([p.unit_vector() for p in self.points])


@lru_cache(maxsize=None)
def _angular_momentum_ops(two_j: int):
    j = two_j / 2
    m = j - np.arange(two_j + 1)
    # J+ |J m> = sqrt(J(J+1) - m(m+1)) |J m+1>; m+1 sits one index lower
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(ladder, 1).astype(complex)
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    jz = np.diag(m).astype(complex)
    for a in (jx, jy, jz):
        a.setflags(write=False)
    return jx, jy, jz


def angular_momentum_ops(j: SpinLike):
    """Return ``(Jx, Jy, Jz)`` for spin ``j`` in the descending-m basis."""
    return _angular_momentum_ops(as_spin(j).two_j)


def ladder_ops(j: SpinLike):
    """Return ``(J+, J-)``."""
    jx, jy, _ = angular_momentum_ops(j)
    return jx + 1j * jy, jx - 1j * jy


def spin_vector(j: SpinLike) -> np.ndarray:
    """Stack of ``(Jx, Jy, Jz)`` with shape ``(3, d, d)``."""
    return np.array(angular_momentum_ops(j))


def spin_component(j: SpinLike, vector) -> np.ndarray:
    """``J . v`` for a real 3-vector ``v`` (not required to be unit)."""
    v = np.asarray(vector, dtype=float)
    return np.tensordot(v, spin_vector(j), axes=1)


def _check_axis(axis) -> np.ndarray:
    u = np.asarray(axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(u) - 1.0) >= 1e-10:
        raise ValueError(f"rotation axis must be a unit vector, |u| = {np.linalg.norm(u)}")
    return u


def rotation_operator(j: SpinLike, omega: float, axis) -> np.ndarray:
    """Unitary ``exp(+i omega J.u)``.

    Evaluated from the eigendecomposition of the Hermitian generator ``J.u``,
    whose spectrum is exactly ``{J, ..., -J}``.
    """
    u = _check_axis(axis)
    gen = spin_component(j, u)
    evals, vecs = np.linalg.eigh(gen)
    # snap to the exact spectrum so periodicity in omega holds to rounding
    evals = np.round(2 * evals) / 2
    return (vecs * np.exp(1j * omega * evals)) @ vecs.conj().T


def rotation_operator_params(j: SpinLike, params: RotationParams) -> np.ndarray:
    return rotation_operator(j, params.omega, params.axis())


def batched_rotation_operators(j: SpinLike, omegas, axes) -> np.ndarray:
    """Rotation operators for a grid.

    ``axes`` has shape ``(A, 3)`` and ``omegas`` shape ``(W,)``; the result has
    shape ``(A, W, d, d)``.  Used by the estimators, which sweep large grids.
    """
    axes = np.asarray(axes, dtype=float).reshape(-1, 3)
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    gens = np.einsum("ai,ijk->ajk", axes, spin_vector(j))
    evals, vecs = np.linalg.eigh(gens)
    evals = np.round(2 * evals) / 2
    phases = np.exp(1j * omegas[None, :, None] * evals[:, None, :])
    return np.einsum("aik,awk,ajk->awij", vecs, phases, vecs.conj())


def classical_rotation(omega: float, axis) -> np.ndarray:
    """SO(3) matrix induced on the sphere by ``rotation_operator(j, omega, axis)``.

    With the ``exp(+i omega J.u)`` sign, states (and their mean spin and
    Majorana stars) turn by ``-omega`` about ``u``, i.e.
    ``R^dag J R = M J`` componentwise.
    """
    u = _check_axis(axis)
    a = -omega
    k = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(a) * k + (1.0 - np.cos(a)) * (k @ k)


def coherent_state(j: SpinLike, n: Direction) -> SpinState:
    """Bloch coherent state ``|n>``, the ``+J`` eigenstate of ``J.n``.

    Amplitudes ``sqrt(C(2J, k)) cos^(2J-k)(theta/2) sin^k(theta/2) e^{i k phi}``
    for ``k = J - m``; this is ``exp(z J-)|JJ> / (1+|z|^2)^J`` with
    ``z = e^{i phi} tan(theta/2)``, written so that theta = pi needs no limit.
    """
    j = as_spin(j)
    k = np.arange(j.dim())
    c, s = np.cos(n.theta / 2), np.sin(n.theta / 2)
    binom = np.array([comb(j.two_j, int(x)) for x in k], dtype=float)
    amps = np.sqrt(binom) * c ** (j.two_j - k) * s**k * np.exp(1j * k * n.phi)
    return SpinState(j, amps)


def polynomial_roots(coeffs) -> tuple:
    """Roots of ``sum_k coeffs[k] w^k`` via the companion matrix.

    Returns ``(finite_roots, n_infinite)``: coefficients below
    ``ROOT_COEFF_TOL`` times the largest magnitude count as zero, a missing
    top degree becomes roots at infinity and missing low degrees roots at 0.
    """
    c = np.asarray(coeffs, dtype=complex)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        raise ValueError("zero polynomial has no well-defined roots")
    nz = np.nonzero(np.abs(c) > ROOT_COEFF_TOL * scale)[0]
    low, high = int(nz[0]), int(nz[-1])
    n_inf = c.size - 1 - high
    core = c[low : high + 1]
    deg = core.size - 1
    roots = np.zeros(low, dtype=complex)
    if deg > 0:
        comp = np.zeros((deg, deg), dtype=complex)
        comp[1:, :-1] = np.eye(deg - 1)
        comp[:, -1] = -core[:-1] / core[-1]
        roots = np.concatenate([roots, np.linalg.eigvals(comp)])
    return roots, n_inf


def majorana_polynomial(state: SpinState) -> np.ndarray:
    """Ascending coefficients of the Husimi-zero polynomial.

    ``<n|psi>`` is proportional to ``sum_k sqrt(C(2J,k)) psi_{J-k} w^k`` with
    ``w = e^{-i phi} tan(theta/2)``, so its zeros mark where the Husimi
    function vanishes.
    """
    j = state.j
    binom = np.array([comb(j.two_j, k) for k in range(j.dim())], dtype=float)
    return np.sqrt(binom) * state.amps


def majorana_constellation(state: SpinState) -> Constellation:
    if state.norm() == 0.0:
        raise ValueError("the zero vector has no constellation")
    roots, n_inf = polynomial_roots(majorana_polynomial(state))
    points = [
        Direction(float(2.0 * np.arctan(abs(w))), float((-np.angle(w)) % TWO_PI)) for w in roots
    ]
    points.extend(Direction(np.pi, 0.0) for _ in range(n_inf))
    return Constellation(tuple(points))
