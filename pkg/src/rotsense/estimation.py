"""Maximum-likelihood rotation estimation from five-projection data.

Model probabilities are ``p_kl = |<n_l| R(omega_k, u) |psi>|^2`` and the
likelihood is multinomial in the normalized ``p_kl / sum p``, weighted by the
calibrated projections ``Q_kl``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import basinhopping, brentq, minimize

from .measurement import ProtocolDirections, coherent_bras
from .metrology import checked_inverse, generators
from .spin_algebra import (
    Direction,
    RotationParams,
    SpinLike,
    SpinState,
    as_spin,
    axis_vector,
    rotation_operator,
    spin_vector,
)

PROB_FLOOR = 1e-12
AXIS_GRID = (64, 128)
FULL_GRID = (36, 32, 64)
N_STARTS = 5
XATOL = 1e-8
FATOL = 1e-13
MAX_ITER = 2000
OMEGA_IDENTIFIABLE = 1e-2
TIE_RTOL = 1e-12
MAX_STARTS = 60
GAP_TOL = 1e-12
HOP_ITER = 30
HOP_STEP = 0.05


class EstimationError(RuntimeError):
    """Optimizer failure; ``best`` holds the best point found so far."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class DeviationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ObservedFisher:
    matrix: np.ndarray
    inverse: np.ndarray
    floored: int = 0
    mode: str = "measured"


@dataclass(frozen=True, eq=False)
class AxisEstimate:
    theta_hat: float
    phi_hat: float
    covariance: Optional[np.ndarray]
    log_likelihood: float
    fisher: Optional[ObservedFisher] = None
    candidates: tuple = ()
    equivalent: tuple = ()

    @property
    def uncertainties(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


@dataclass(frozen=True)
class RotationEstimate:
    omega_hat: float
    theta_hat: float
    phi_hat: float
    log_likelihood: float
    axis_identifiable: bool = True
    equivalent: tuple = ()

    @property
    def params(self) -> RotationParams:
        return RotationParams(self.omega_hat, self.theta_hat, self.phi_hat)

    def canonical(self) -> RotationParams:
        return self.params.canonical()


def _spectrum(j) -> np.ndarray:
    j = as_spin(j)
    return np.arange(-j.two_j, j.two_j + 1, 2) / 2.0  # eigh order, ascending


def _axis_factors(state: SpinState, bras: np.ndarray, axes: np.ndarray):
    """Per-axis eigenbasis factors ``<n_l|V`` and ``V^dag psi``."""
    gens = np.einsum("ai,ijk->ajk", axes, spin_vector(state.j))
    _, vecs = np.linalg.eigh(gens)
    left = np.einsum("ld,adm->alm", bras, vecs)
    right = np.einsum("adm,d->am", vecs.conj(), state.amps)
    return left, right


def model_probabilities(
    state: SpinState, protocol: ProtocolDirections, omegas, axes
) -> np.ndarray:
    """``p[a, k, l] = |<n_l| R(omega_k, axes[a]) |psi>|^2``."""
    axes = np.asarray(axes, dtype=float).reshape(-1, 3)
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    left, right = _axis_factors(state, coherent_bras(state.j, protocol), axes)
    phases = np.exp(1j * omegas[:, None] * _spectrum(state.j)[None, :])
    amp = np.einsum("alm,km,am->akl", left, phases, right)
    return np.abs(amp) ** 2


def _log_norm(p: np.ndarray, axis) -> np.ndarray:
    total = np.sum(p, axis=axis, keepdims=True)
    return np.log(np.maximum(p, PROB_FLOOR)) - np.log(total)


def axis_log_likelihood(
    q: np.ndarray,
    omegas,
    Theta: float,
    Phi: float,
    probe: SpinState,
    protocol: ProtocolDirections,
) -> float:
    """``sum_kl Q_kl log(p_kl / sum p)`` for a fixed axis over the angle grid."""
    q = np.asarray(q, dtype=float)
    p = model_probabilities(probe, protocol, omegas, axis_vector(Theta, Phi)[None])[0]
    return float(np.sum(q * _log_norm(p, axis=None)))


def rotation_log_likelihood(
    q5: np.ndarray, params: RotationParams, probe: SpinState, protocol: ProtocolDirections
) -> float:
    p = model_probabilities(probe, protocol, [params.omega], params.axis()[None])[0, 0]
    return float(np.sum(np.asarray(q5, dtype=float) * _log_norm(p, axis=None)))


def _sphere_grid(n_theta: int, n_phi: int):
    thetas = np.linspace(0.0, np.pi, n_theta)
    phis = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    tt, pp = tt.ravel(), pp.ravel()
    axes = np.column_stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)])
    return tt, pp, axes


def _wrap_axis(theta: float, phi: float) -> Tuple[float, float]:
    d = Direction.from_vector(axis_vector(theta, phi))
    return d.theta, d.phi


def _grid_local_maxima(scores: np.ndarray, shape, periodic) -> np.ndarray:
    """Flat indices of cells not beaten by any neighbour on the grid."""
    grid = scores.reshape(shape)
    keep = np.ones(shape, dtype=bool)
    for offset in np.ndindex(*(3,) * len(shape)):
        shift = tuple(o - 1 for o in offset)
        if not any(shift):
            continue
        nb = grid
        valid = np.ones(shape, dtype=bool)
        for ax, (s_, wrap) in enumerate(zip(shift, periodic)):
            if s_ == 0:
                continue
            nb = np.roll(nb, -s_, axis=ax)
            if not wrap:
                edge = [slice(None)] * len(shape)
                edge[ax] = -1 if s_ > 0 else 0
                v = np.ones(shape, dtype=bool)
                v[tuple(edge)] = False
                valid &= v
        keep &= ~valid | (grid >= nb)
    return np.flatnonzero(keep)


def _top_starts(scores: np.ndarray, points: np.ndarray, n: int, shape=None, periodic=None):
    """Best ``n`` grid points, ties broken lexicographically.

    With a grid ``shape`` only local maxima of the scan are eligible, so the
    starts land in distinct basins instead of crowding one peak.
    """
    idx = np.arange(scores.size)
    if shape is not None:
        idx = _grid_local_maxima(scores, shape, periodic)
    pts, sc = points[idx], scores[idx]
    order = np.lexsort(tuple(pts[:, i] for i in reversed(range(pts.shape[1]))) + (-sc,))
    return pts[order[:n]]


def _refine(objective, starts, maxiter: int, restart: bool = False):
    """Nelder-Mead from each start, in start order.

    With ``restart`` each run is repeated once from its end point with a fresh
    simplex, which frees it when the first simplex collapsed on a flat ridge.
    """
    opts = {"xatol": XATOL, "fatol": FATOL, "maxiter": maxiter, "maxfev": 4 * maxiter}
    out = []
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead", options=opts)
        if restart:
            again = minimize(objective, res.x, method="Nelder-Mead", options=opts)
            if again.fun <= res.fun:
                res = again
        out.append(res)
    return out


def _rank(results, canon):
    """Order refined points by likelihood, ties by canonical parameters.

    Values within ``TIE_RTOL`` of the best count as tied: several parameter
    sets can reproduce the data exactly when the probe is symmetric.
    Returns ``[(loglik, params, result), ...]`` best first and the tie count.
    """
    rows = [(-float(r.fun), canon(r.x), r) for r in results]
    top = max(v for v, _, _ in rows)
    tol = TIE_RTOL * max(1.0, abs(top))
    tied = [row for row in rows if top - row[0] <= tol]
    rest = [row for row in rows if top - row[0] > tol]
    tied.sort(key=lambda row: tuple(np.round(row[1], 9)))
    rest.sort(key=lambda row: (-row[0], tuple(np.round(row[1], 9))))
    return tied + rest, len(tied)


def _distinct(points, tol: float = 1e-6) -> tuple:
    out = []
    for p in points:
        p = tuple(float(v) for v in p)
        if not any(np.allclose(p[:3], o[:3], atol=tol) for o in out):
            out.append(p)
    return tuple(out)


def estimate_axis(
    q: np.ndarray,
    omegas,
    probe: SpinState,
    protocol: ProtocolDirections,
    grid: Tuple[int, int] = AXIS_GRID,
    n_starts: int = N_STARTS,
    maxiter: int = MAX_ITER,
    with_fisher: bool = True,
    fisher_mode: str = "measured",
) -> AxisEstimate:
    """Global maximizer of the axis likelihood over the whole sphere.

    A coarse grid scan seeds Nelder-Mead from the best ``n_starts`` cells;
    no constraint is placed on the axis.
    """
    q = np.asarray(q, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    if q.shape != (omegas.size, 5):
        raise ValueError(f"q must have shape ({omegas.size}, 5), got {q.shape}")
    tt, pp, axes = _sphere_grid(*grid)
    p = model_probabilities(probe, protocol, omegas, axes)
    ll = np.einsum("kl,akl->a", q, _log_norm(p, axis=(1, 2)))
    starts = _top_starts(ll, np.column_stack([tt, pp]), n_starts, grid, (False, True))

    def objective(x):
        return -axis_log_likelihood(q, omegas, x[0], x[1], probe, protocol)

    ranked, n_tied = _rank(_refine(objective, starts, maxiter), lambda x: _wrap_axis(*x))
    loglik, (theta, phi), best = ranked[0]
    if not best.success:
        raise EstimationError(
            f"axis refinement did not converge: {best.message}", best=(theta, phi, loglik)
        )
    cands = tuple((*params, ll) for ll, params, _ in ranked)
    fisher = cov = None
    if with_fisher:
        fisher = observed_fisher(q, omegas, probe, protocol, (theta, phi), mode=fisher_mode)
        cov = fisher.inverse
    return AxisEstimate(theta, phi, cov, loglik, fisher, cands, _distinct(cands[:n_tied]))


@lru_cache(maxsize=8)
def _full_grid_cache(amps_key: bytes, two_j: int, protocol: ProtocolDirections, grid):
    state = SpinState(as_spin(two_j / 2), np.frombuffer(amps_key, dtype=complex))
    n_w, n_t, n_p = grid
    omegas = np.arange(n_w) * (2.0 * np.pi / n_w)
    tt, pp, axes = _sphere_grid(n_t, n_p)
    p = model_probabilities(state, protocol, omegas, axes)  # (A, K, 5)
    logp = _log_norm(p, axis=2)
    points = np.column_stack(
        [np.tile(omegas, tt.size), np.repeat(tt, n_w), np.repeat(pp, n_w)]
    )
    logp = logp.reshape(-1, 5)
    logp.setflags(write=False)
    return points, logp


def full_grid(probe: SpinState, protocol: ProtocolDirections, grid=FULL_GRID):
    """Cached ``(points, log p_norm)`` over the coarse (omega, Theta, Phi) grid."""
    return _full_grid_cache(probe.amps.tobytes(), probe.j.two_j, protocol, tuple(grid))


def estimate_rotation(
    q5: np.ndarray,
    probe: SpinState,
    protocol: ProtocolDirections,
    grid: Tuple[int, int, int] = FULL_GRID,
    n_starts: int = N_STARTS,
    maxiter: int = MAX_ITER,
    max_starts: int = MAX_STARTS,
    q_std: Optional[np.ndarray] = None,
    hop_iter: int = HOP_ITER,
) -> RotationEstimate:
    """All three rotation parameters from the five projections of one rotation.

    Starts are the best local maxima of a coarse grid scan, refined in batches
    of ``n_starts``.  More batches are tried, up to ``max_starts`` in total,
    while the fit stays clearly below the empirical ceiling; ``q_std`` sets
    how close counts as clear for noisy data.
    """
    q5 = np.asarray(q5, dtype=float).reshape(5)
    points, logp = full_grid(probe, protocol, grid)
    ll = logp @ q5
    starts = _top_starts(ll, points, max(n_starts, max_starts), (grid[1], grid[2], grid[0]), (False, True, True))

    def objective(x):
        return -rotation_log_likelihood(q5, RotationParams(*x), probe, protocol)

    def canon(x):
        return tuple(RotationParams(*x).canonical().as_array())

    # no model can beat the empirical distribution, so its log-likelihood
    # tells when the global maximum has been reached
    pos = q5[q5 > 0]
    ceiling = float(np.sum(pos * np.log(pos / q5.sum())))
    gap_tol = GAP_TOL * max(1.0, abs(ceiling))
    if q_std is not None:
        # a correct fit to noisy data falls short of the ceiling by about
        # half a chi-square per spare degree of freedom
        std = np.asarray(q_std, dtype=float).reshape(5)
        gap_tol = max(gap_tol, 2.0 * float(np.sum(std[q5 > 0] ** 2 / pos)))
    def fitted():
        return -min(r.fun for r in results) >= ceiling - gap_tol

    results = _refine(objective, starts[:n_starts], maxiter)
    used = n_starts
    while used < len(starts) and not fitted():
        results += _refine(objective, starts[used : used + n_starts], maxiter)
        used += n_starts
    if not fitted():
        results += _refine(objective, [min(results, key=lambda r: r.fun).x], maxiter)
    best = min(results, key=lambda r: r.fun)
    if hop_iter and -best.fun < ceiling - gap_tol:
        # narrow basins can slip between grid cells; hop locally around the best
        hop = basinhopping(
            objective,
            best.x,
            niter=hop_iter,
            stepsize=HOP_STEP,
            seed=0,
            minimizer_kwargs={"method": "Nelder-Mead", "options": {"xatol": XATOL, "fatol": FATOL, "maxiter": maxiter}},
        )
        if hop.fun < best.fun:
            results.append(hop.lowest_optimization_result)

    ranked, n_tied = _rank(results, canon)
    loglik, params, best = ranked[0]
    est = RotationParams(*params).reduced()
    if not best.success:
        raise EstimationError(f"rotation refinement did not converge: {best.message}", best=est)
    identifiable = bool(est.canonical().omega > OMEGA_IDENTIFIABLE)
    equivalent = _distinct([row[1] for row in ranked[:n_tied]])
    return RotationEstimate(est.omega, est.theta_axis, est.phi_axis, loglik, identifiable, equivalent)


def probability_gradients(
    probe: SpinState,
    protocol: ProtocolDirections,
    omegas,
    Theta: float,
    Phi: float,
    params: Sequence[int] = (1, 2),
) -> Tuple[np.ndarray, np.ndarray]:
    """``p[k, l]`` and ``dp[i, k, l]`` for the parameters indexed by ``params``.

    Uses ``d_i <n|R psi> = -i <n|R G_i psi>``, so
    ``d_i p = 2 Im(conj(<n|R psi>) <n|R G_i psi>)``.
    """
    bras = coherent_bras(probe.j, protocol)
    u = axis_vector(Theta, Phi)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    idx = list(params)
    p = np.zeros((omegas.size, 5))
    dp = np.zeros((len(idx), omegas.size, 5))
    for k, w in enumerate(omegas):
        R = rotation_operator(probe.j, w, u)
        amp = bras @ (R @ probe.amps)
        gens = generators(w, Theta, Phi, probe.j)
        p[k] = np.abs(amp) ** 2
        for i, g in enumerate(idx):
            damp = bras @ (R @ (gens[g] @ probe.amps))
            dp[i, k] = 2.0 * np.imag(amp.conj() * damp)
    return p, dp


def observed_fisher(
    q: Optional[np.ndarray],
    omegas,
    probe: SpinState,
    protocol: ProtocolDirections,
    at,
    mode: str = "measured",
    params: Sequence[int] = (1, 2),
) -> ObservedFisher:
    """Fisher information per probe state of the five-projection measurement.

    ``F_ij = sum_kl (Q / Q_kl) d_i(p_kl/P) d_j(p_kl/P)`` with ``P = sum p``.
    In ``"measured"`` mode ``Q_kl`` are the data and ``Q`` their total; in
    ``"model"`` mode ``Q_kl / Q`` is replaced by ``p_kl / P``, the expected
    information at ``at``.  ``at`` is ``(Theta, Phi)`` for axis parameters or
    ``(omega, Theta, Phi)`` together with a single omega for full rotations.
    """
    if len(at) == 3:
        omegas = [at[0]]
        Theta, Phi = at[1], at[2]
    else:
        Theta, Phi = at
    p, dp = probability_gradients(probe, protocol, omegas, Theta, Phi, params)
    P = p.sum()
    dP = dp.sum(axis=(1, 2))
    dpi = dp / P - p[None] * dP[:, None, None] / P**2
    floored = 0
    if mode == "model":
        pi = np.maximum(p / P, PROB_FLOOR)
        floored = int(np.sum(p / P < PROB_FLOOR))
        weight = 1.0 / pi
    elif mode == "measured":
        if q is None:
            raise ValueError("measured mode needs data")
        q = np.asarray(q, dtype=float).reshape(p.shape)
        floored = int(np.sum(q < PROB_FLOOR))
        weight = q.sum() / np.maximum(q, PROB_FLOOR)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    F = np.einsum("kl,ikl,jkl->ij", weight, dpi, dpi)
    F = 0.5 * (F + F.T)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    omega_ref = float(omegas[np.argmax(np.abs(np.sin(omegas / 2)))])
    Finv = checked_inverse(F, omega_ref, Theta, params)
    return ObservedFisher(F, Finv, floored, mode)


def calibrated_data_fisher(
    std: np.ndarray, omegas, probe: SpinState, protocol: ProtocolDirections, at, params=(1, 2)
) -> ObservedFisher:
    """Fisher information of Gaussian-noise calibrated data ``Q_kl ~ N(p_kl, std_kl^2)``.

    This is the Cramer-Rao reference for repeated noisy simulations, where the
    spread comes from power-meter noise rather than single-probe statistics.
    """
    Theta, Phi = at
    _, dp = probability_gradients(probe, protocol, omegas, Theta, Phi, params)
    w = 1.0 / np.asarray(std, dtype=float) ** 2
    F = np.einsum("kl,ikl,jkl->ij", w, dp, dp)
    return ObservedFisher(F, checked_inverse(F, np.pi, Theta, params), 0, "noise")


def weighted_uncertainty(F_inv: np.ndarray, Theta: float) -> float:
    """``Tr(g F^-1)`` with ``g = diag(1, sin^2 Theta)``."""
    F_inv = np.asarray(F_inv)
    if F_inv.shape != (2, 2):
        raise ValueError("expected a 2x2 axis covariance")
    return float(F_inv[0, 0] + np.sin(Theta) ** 2 * F_inv[1, 1])


def character(delta, j: SpinLike):
    """``Tr R(delta) = sin((2J+1) delta/2) / sin(delta/2)`` (value ``2J+1`` at 0)."""
    jj = as_spin(j).j
    d = np.asarray(delta, dtype=float)
    s = np.sin(d / 2.0)
    small = np.abs(s) < 1e-12
    safe = np.where(small, 1.0, s)
    out = np.where(small, 2 * jj + 1, np.sin((2 * jj + 1) * d / 2.0) / safe)
    return out if out.ndim else float(out)


def smallest_character_root(t: float, j: SpinLike, n_bracket: int = 2048) -> float:
    """Smallest ``delta`` in [0, pi] with ``character(delta) = t``."""
    dim = as_spin(j).dim()
    if abs(t) > dim + 1e-9:
        raise DeviationError(f"|trace| = {abs(t)} exceeds the dimension {dim}")
    if t >= dim - 1e-12:
        return 0.0
    grid = np.linspace(0.0, np.pi, n_bracket + 1)
    f = character(grid, j) - t
    hit = np.nonzero(f == 0.0)[0]
    sign = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    first = min([*hit, *sign], default=None)
    if first is None:
        # tangency with the curve: take the closest grid point
        return float(grid[int(np.argmin(np.abs(f)))])
    if f[first] == 0.0:
        return float(grid[first])
    return float(brentq(lambda d: character(d, j) - t, grid[first], grid[first + 1], xtol=1e-15))


def _half_turn_angle(u: np.ndarray) -> float:
    """Rotation angle in [0, pi] of a 2x2 SU(2) matrix, sign-blind."""
    tr = np.trace(u)
    vec = np.linalg.norm(u - tr / 2 * np.eye(2)) / np.sqrt(2.0)
    return float(2.0 * np.arctan2(vec, abs(tr.real) / 2.0))


def _relative(a: RotationParams, b: RotationParams, j, g: Optional[RotationParams] = None):
    ra = rotation_operator(j, a.omega, a.axis())
    rb = rotation_operator(j, b.omega, b.axis())
    rel = ra.conj().T @ rb
    if g is not None:
        rel = rotation_operator(j, g.omega, g.axis()).conj().T @ rel
    return rel


def deviation_angle(
    true: RotationParams,
    est: RotationParams,
    j: SpinLike,
    method: str = "group",
    symmetries: Optional[Sequence[RotationParams]] = None,
) -> float:
    """Angle of the rotation ``R(true)^dag R(est)``, in [0, pi].

    ``t = Re Tr[R(true)^dag R(est)]`` in spin ``j`` is the character of the
    relative angle.  For J >= 3/2 the character is not monotone on [0, pi], so
    ``method="group"`` reads the angle off the spin-1/2 lift (whose trace is
    ``2 cos(delta/2)``) and checks it against ``t``; ``"smallest_root"`` keeps
    the smallest root of ``character = t``.

    With ``symmetries`` (the probe stabilizer) the result is minimized over
    ``R(true) R(g)``, all of which prepare the same rotated state.
    """
    j = as_spin(j)
    cands = list(symmetries) if symmetries else [None]
    best = np.inf
    for g in cands:
        t = float(np.trace(_relative(true, est, j, g)).real)
        if abs(t) > j.dim() + 1e-9:
            raise DeviationError(f"|trace| = {abs(t)} exceeds the dimension {j.dim()}")
        if method == "smallest_root":
            d = smallest_character_root(t, j) if j.is_integer else smallest_character_root(abs(t), j)
        elif method == "group":
            d = _half_turn_angle(_relative(true, est, as_spin(0.5), g))
            chi = character(d, j)
            ok = abs(chi - t) if j.is_integer else abs(abs(chi) - abs(t))
            if ok > 1e-6 * j.dim():
                raise DeviationError(f"spin-{j} trace {t} inconsistent with angle {d} (character {chi})")
        else:
            raise ValueError(f"unknown method {method!r}")
        best = min(best, d)
    return float(best)
