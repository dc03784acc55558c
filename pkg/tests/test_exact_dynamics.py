import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from otocqsl import ChainParams, TimeGrid
from otocqsl.exact_dynamics import (
    InvariantWarning, exact_average_otoc, exact_otoc_at, haar_average_otoc_mc, haar_otoc_statistics,
    haar_unitary, initial_state, propagate, purity, reduced_state_series, renyi2_entropy,
    sample_rng, thermal_state,
)
from otocqsl.spinchain import build_chain_hamiltonian, decompose, partial_trace


def test_thermal_state_matches_expm(small_params):
    _, H_B, _ = decompose(small_params)
    ref = expm(-small_params.beta * H_B)
    ref /= np.trace(ref)
    assert np.allclose(thermal_state(H_B, small_params.beta), ref, atol=1e-12)


def test_infinite_temperature_is_maximally_mixed():
    H = np.diag([0.0, 1.0, 5.0])
    assert np.allclose(thermal_state(H, 0.0), np.eye(3) / 3)


def test_initial_state_is_quenched(small_params):
    rho = initial_state(small_params)
    rho_A = partial_trace(rho, (2, 2 ** (small_params.N - 1)), "A")
    assert np.allclose(rho_A, [[0, 0], [0, 1]])
    assert np.isclose(np.trace(rho), 1.0)


def test_propagate_matches_expm(small_params):
    H = build_chain_hamiltonian(small_params)
    rho0 = initial_state(small_params)
    grid = TimeGrid(0.3, 3)
    states = propagate(rho0, H, grid)
    for t, rho in zip(grid.points, states):
        U = expm(-1j * H * t)
        assert np.allclose(rho, U @ rho0 @ U.conj().T, atol=1e-11)


def test_reduced_series_matches_partial_trace(small_params):
    H = build_chain_hamiltonian(small_params)
    rho0 = initial_state(small_params)
    grid = TimeGrid(0.25, 4)
    fast = reduced_state_series(H, rho0, grid)
    slow = [partial_trace(r, (2, 8), "A") for r in propagate(rho0, H, grid)]
    assert np.allclose(fast, slow, atol=1e-12)


def test_otoc_starts_at_one_and_stays_above_half(small_params):
    series = exact_average_otoc(small_params)
    assert abs(series.otoc[0] - 1) < 1e-12
    assert np.all(series.otoc >= 0.5 - 1e-10)
    assert np.allclose(series.otoc, np.exp(-series.renyi2))


def test_exact_otoc_at_matches_grid(small_params):
    series = exact_average_otoc(small_params)
    pts = series.grid.points[[3, 17, 40]]
    assert np.allclose(exact_otoc_at(small_params, pts), series.otoc[[3, 17, 40]])


def test_no_dynamics_without_coupling():
    p = ChainParams(N=3, J=0.0, h=0.0, g=0.7, dt=0.1, t_max=2.0)
    assert np.allclose(exact_average_otoc(p).otoc, 1.0)


def test_renyi2_values():
    assert renyi2_entropy(np.diag([1.0, 0.0])) == 0.0
    assert np.isclose(renyi2_entropy(np.eye(2) / 2), np.log(2))
    assert np.isclose(purity(np.eye(4) / 4), 0.25)


def test_renyi2_warns_outside_range():
    with pytest.warns(InvariantWarning):
        val = renyi2_entropy(np.diag([1.5, 0.5]))
    assert val == 0.0


def test_haar_unitary_is_unitary(rng):
    U = haar_unitary(8, rng)
    assert np.allclose(U @ U.conj().T, np.eye(8), atol=1e-12)


def test_haar_unitary_moments():
    # E|U_11|^2 = 1/d and E|U_11|^4 = 2/(d(d+1)) for Haar measure
    d, n = 4, 20000
    rng = np.random.default_rng(7)
    a = np.array([abs(haar_unitary(d, rng)[0, 0]) ** 2 for _ in range(n)])
    assert abs(a.mean() - 1 / d) < 4 * a.std() / np.sqrt(n)
    assert abs((a**2).mean() - 2 / (d * (d + 1))) < 4 * (a**2).std() / np.sqrt(n)


def test_haar_phase_fix_gives_uniform_trace_phase():
    rng = np.random.default_rng(3)
    tr = np.array([np.trace(haar_unitary(3, rng)) for _ in range(4000)])
    # E tr U = 0 for Haar; an unfixed QR leaves a bias toward positive real trace
    assert abs(tr.mean()) < 4 * tr.std() / np.sqrt(len(tr))


def test_sample_rng_streams_are_keyed():
    a = sample_rng(5, 0).standard_normal(3)
    assert np.array_equal(a, sample_rng(5, 0).standard_normal(3))
    assert not np.array_equal(a, sample_rng(5, 1).standard_normal(3))
    assert not np.array_equal(a, sample_rng(6, 0).standard_normal(3))


def test_haar_estimate_at_zero_is_one():
    p = ChainParams(N=3)
    est, err = haar_average_otoc_mc(p, 0.0, 400, seed=1)
    assert abs(est - 1) < 4 * err


def test_haar_deterministic_and_real():
    p = ChainParams(N=3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = haar_otoc_statistics(p, [0.5, 1.0], 100, seed=9)
    b = haar_otoc_statistics(p, [0.5, 1.0], 100, seed=9)
    assert np.array_equal(a.estimate, b.estimate)
    assert np.all(np.abs(a.imag_mean) < 1e-12)


def test_haar_rejects_single_sample():
    with pytest.raises(ValueError):
        haar_otoc_statistics(ChainParams(N=3), [0.1], 1)
