from fractions import Fraction

import numpy as np
import pytest

from rotsense import metrology as met
from rotsense.probe_states import coherent, king_j2, king_j3, noon, spin_covariance
from rotsense.spin_algebra import angular_momentum_ops, axis_vector, rotation_operator

from conftest import random_state

GRID = met.omega_grid()


def _random_omega(rng):
    return rng.uniform(0, 2 * np.pi), rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)


def test_omega_grid():
    assert GRID.size == 37
    assert np.isclose(GRID[1], np.pi / 18) and np.isclose(GRID[-1], 2 * np.pi)


def test_h_omega_is_minus_axis(rng):
    for _ in range(20):
        w, t, p = _random_omega(rng)
        assert np.array_equal(met.h_matrix(w, t, p).h_omega, -axis_vector(t, p))


def test_gram_at_zero_angle():
    assert np.allclose(met.h_matrix(0.0, 1.0, 2.0).gram(), np.diag([1, 0, 0]))


def test_gram_identity_many(rng):
    ws = rng.uniform(0, 2 * np.pi, 10**4)
    ts = rng.uniform(0, np.pi, 10**4)
    ps = rng.uniform(0, 2 * np.pi, 10**4)
    worst = 0.0
    for w, t, p in zip(ws, ts, ps):
        s2 = np.sin(w / 2) ** 2
        ref = np.diag([1.0, 4 * s2, 4 * s2 * np.sin(t) ** 2])
        worst = max(worst, np.abs(met.h_matrix(w, t, p).gram() - ref).max())
    assert worst < 1e-12


def _fd_generator(j, w, t, p, k, step=1e-6):
    x = np.array([w, t, p], dtype=float)
    R = lambda y: rotation_operator(j, y[0], axis_vector(y[1], y[2]))
    e = np.zeros(3)
    e[k] = step
    dR = (R(x + e) - R(x - e)) / (2 * step)
    return 1j * R(x).conj().T @ dR


@pytest.mark.parametrize("j", [0.5, 1, 2, 3])
def test_generators_match_finite_differences(j, rng):
    for _ in range(5):
        w, t, p = rng.uniform(0.2, 6.0), rng.uniform(0.2, 2.9), rng.uniform(0, 6)
        gens = met.generators(w, t, p, j)
        for k in range(3):
            assert np.allclose(gens[k], gens[k].conj().T)
            assert np.abs(gens[k] - _fd_generator(j, w, t, p, k)).max() < 1e-6


def test_generator_special_cases():
    g_omega = met.generators(1.0, 0.0, 0.0, 1)[0]
    assert np.allclose(g_omega, -angular_momentum_ops(1)[2])
    assert np.allclose(met.generators(0.0, 1.0, 2.0, 2)[1], 0)


def test_qfim_king_j2_half_turn():
    Q = met.qfim(king_j2(), np.pi, np.pi / 2, 0.3).matrix
    assert np.allclose(Q, np.diag([8, 32, 32]), atol=1e-12)


def test_qfim_rank_one_at_zero_angle(rng):
    psi = random_state(rng, 2)
    Q = met.qfim(psi, 0.0, 1.0, 2.0).matrix
    assert np.linalg.matrix_rank(Q, tol=1e-10) <= 1


@pytest.mark.parametrize("make,j", [(king_j2, 2), (king_j3, 3)])
def test_qfim_kings_proportional_to_gram(make, j, rng):
    psi = make()
    for _ in range(20):
        w, t, p = _random_omega(rng)
        Q = met.qfim(psi, w, t, p).matrix
        ref = 4 * j * (j + 1) / 3 * met.h_matrix(w, t, p).gram()
        assert np.abs(Q - ref).max() < 1e-10


def test_qfim_product_vs_generator_covariance(rng):
    for _ in range(100):
        psi = random_state(rng, rng.choice([1, 1.5, 2, 3]))
        w, t, p = _random_omega(rng)
        a = met.qfim(psi, w, t, p).matrix
        b = met.generator_covariance_qfim(psi, w, t, p).matrix
        assert np.abs(a - b).max() < 1e-10


def test_qcrb_cost_king_j2():
    assert np.isclose(met.qcrb_weighted_cost(king_j2(), 1.3, 0.9, 2.0), 3 / 8)
    assert np.isclose(met.inverse_covariance_trace(king_j2()), 1.5)
    assert np.isclose(met.su2_bound(2), 1.5)


def test_qcrb_cost_explicit_weight():
    W = np.diag([1.0, 2.0, 3.0])
    w, t, p = 1.0, 1.2, 0.4
    Q = met.qfim(king_j3(), w, t, p).matrix
    assert np.isclose(met.qcrb_weighted_cost(king_j3(), w, t, p, W), np.trace(W @ np.linalg.inv(Q)))


def test_coherent_singular_errors():
    with pytest.raises(met.DegenerateGeometryError) as e:
        met.qcrb_weighted_cost(coherent(2), 1.0, 1.0, 1.0)
    assert e.value.parameters
    with pytest.raises(met.DegenerateGeometryError):
        met.inverse_covariance_trace(coherent(2, 0.4, 0.1))


def test_degenerate_geometry_names_parameter():
    with pytest.raises(met.DegenerateGeometryError) as e:
        met.qcrb_weighted_cost(king_j2(), 0.0, 1.0, 1.0)
    assert set(e.value.parameters) <= {"Theta", "Phi"} and e.value.parameters
    with pytest.raises(met.DegenerateGeometryError) as e:
        met.qcrb_weighted_cost(king_j2(), 1.0, 0.0, 1.0)
    assert e.value.parameters == ("Phi",)


def test_fmax_examples():
    F = met.fmax_single(2, np.pi / 2, np.pi)
    assert np.allclose(F, np.diag([32, 32]))
    _, inv2 = met.fmax_axis(2, 1.13, GRID)
    assert np.allclose(inv2, [[0.0642, 0], [0, 0.0786]], atol=1e-3)
    _, inv3 = met.fmax_axis(3, 2.37, GRID)
    assert np.allclose(inv3, [[0.0321, 0], [0, 0.0666]], atol=1e-3)


def test_fmax_errors():
    with pytest.raises(ValueError):
        met.fmax_axis(2, 1.0, [])
    with pytest.raises(met.DegenerateGeometryError):
        met.fmax_axis(2, 1.0, [0.0, 2 * np.pi])


def test_ultimate_limit():
    assert met.grid_mean_sin2(36) == Fraction(18, 37)
    assert np.isclose(np.mean(np.sin(GRID / 2) ** 2), 18 / 37)
    assert met.ultimate_weighted_limit_exact(2) == Fraction(37, 288)
    assert met.ultimate_weighted_limit_exact(3) == Fraction(37, 576)
    assert np.isclose(met.ultimate_weighted_limit(2, GRID), 37 / 288)
    _, inv = met.fmax_axis(2, 0.8, GRID)
    assert np.isclose(met.weighted_trace(inv, 0.8), 37 / 288)
    # a grid with mean sin^2 = 1/2
    assert np.isclose(met.ultimate_weighted_limit(2, [np.pi / 2, 3 * np.pi / 2]), 3 / (4 * 6))


def test_axis_limit_of_kings_matches_fmax():
    # isotropic covariance J(J+1)/3 attains the optimal axis information
    for psi, j in ((king_j2(), 2), (king_j3(), 3)):
        lim = met.axis_weighted_limit(spin_covariance(psi).cov, 1.0, 2.0, GRID)
        assert np.isclose(lim, met.ultimate_weighted_limit(j, GRID))


def test_noon_covariance_orientations():
    covs = met.noon_covariances(2)
    assert np.allclose(covs[0], spin_covariance(noon(2)).cov, atol=1e-12)
    assert np.allclose(np.diag(covs[1]), [4, 1, 1])


def test_saturability():
    assert met.saturability_check(king_j2())
    assert met.saturability_check(noon(3))
    assert not met.saturability_check(coherent(2))


def test_commutator_expectations_match_matrices(rng):
    psi = random_state(rng, 2)
    w, t, p = _random_omega(rng)
    gens = met.generators(w, t, p, 2)
    C = met.commutator_expectations(psi, w, t, p)
    for a in range(3):
        for b in range(3):
            comm = gens[a] @ gens[b] - gens[b] @ gens[a]
            assert np.isclose(np.vdot(psi.amps, comm @ psi.amps) / 1j, C[a, b])


def test_checked_inverse():
    assert np.allclose(met.checked_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    with pytest.raises(met.DegenerateGeometryError):
        met.checked_inverse(np.diag([1.0, 1e-12]))
