import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from otocqsl import ChainParams, TimeGrid
from otocqsl.bath import CorrelatorKernel, stationary_kernel
from otocqsl.exact_dynamics import InvariantWarning, excited_projector
from otocqsl.redfield import (
    BoundSeries, cumulative_trapezoid, fit_rate, generator_from_memory, grid_memory, integrate_redfield,
    liouvillian_matrix, memory_operator, qsl_bounds, redfield_rhs, rhs_from_memory, scrambling_rate,
    spectral_norm, system_trajectory, timescales, trapezoid_weights, unvec, vec,
)
from otocqsl.spinchain import PAULI

from conftest import random_density


def term_by_term_rhs(rho, n, kernel, traj, J):
    # -J^2 sum_s w_s (Gamma [Z_t, Z_s rho] - Gamma* [Z_t, rho Z_s])
    zt = traj.ops[n]
    w = trapezoid_weights(n, kernel.grid.dt)
    out = np.zeros((2, 2), dtype=complex)
    for k in range(n + 1):
        G, zs = kernel.value(n, k), traj.ops[k]
        out += w[k] * (G * (zt @ zs @ rho - zs @ rho @ zt) - np.conj(G) * (zt @ rho @ zs - rho @ zs @ zt))
    return -J**2 * out


def dephasing_setup(J=0.8, dt=0.01, t_max=1.0):
    # h = g = 0: sigma_1^z is static and the bath correlator is identically 1
    p = ChainParams(N=3, J=J, h=0.0, g=0.0, dt=dt, t_max=t_max)
    grid = TimeGrid.from_params(p)
    return p, grid, stationary_kernel(p, grid), system_trajectory(p, grid)


@pytest.fixture(scope="module")
def p5_setup():
    p = ChainParams(N=5, dt=0.02, t_max=1.2 / 0.65)
    grid = TimeGrid.from_params(p)
    return p, grid, stationary_kernel(p, grid), system_trajectory(p, grid)


def test_trajectory_is_rotated_pauli(p5_setup):
    p, grid, _, traj = p5_setup
    assert np.allclose(traj.ops[0], PAULI["z"])
    for z in traj.ops[[5, 40]]:
        assert np.allclose(z @ z, np.eye(2), atol=1e-12)
        assert np.allclose(z, z.conj().T)


def test_vec_roundtrip(rng):
    A, X, B = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(3))
    assert np.allclose(unvec(vec(X)), X)
    assert np.allclose(vec(A @ X @ B), np.kron(B.T, A) @ vec(X))


def test_memory_operator_matches_grid_memory(p5_setup):
    _, _, k, traj = p5_setup
    S = grid_memory(k, traj)
    for n in (0, 1, 17, len(k.values) - 1):
        assert np.allclose(memory_operator(n, k, traj), S[n], atol=1e-13)
    with pytest.raises(IndexError):
        memory_operator(len(k.values), k, traj)


@pytest.mark.parametrize("n", [0, 3, 50])
def test_rhs_matches_term_by_term(p5_setup, rng, n):
    p, _, k, traj = p5_setup
    rho = random_density(2, rng)
    assert np.allclose(redfield_rhs(rho, n, k, traj, p.J), term_by_term_rhs(rho, n, k, traj, p.J), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), J=st.floats(0.01, 2.0))
def test_generator_vec_consistency(seed, J):
    rng = np.random.default_rng(seed)
    z = random_density(2, rng)
    z = z + z.conj().T
    S = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    X = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    M = generator_from_memory(z, S, J)
    assert np.allclose(M @ vec(X), vec(rhs_from_memory(X, z, S, J)), atol=1e-12)


def test_liouvillian_matrix_is_generator(p5_setup, rng):
    p, _, k, traj = p5_setup
    rho = random_density(2, rng)
    M = liouvillian_matrix(30, k, traj, p.J)
    assert np.allclose(M @ vec(rho), vec(redfield_rhs(rho, 30, k, traj, p.J)))


def test_rhs_preserves_trace_and_hermiticity(p5_setup, rng):
    p, _, k, traj = p5_setup
    rho = random_density(2, rng)
    d = redfield_rhs(rho, 40, k, traj, p.J)
    assert abs(np.trace(d)) < 1e-14
    assert np.allclose(d, d.conj().T)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_spectral_norm_gram_oracle(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    gram = np.linalg.eigvalsh(M.conj().T @ M).max()
    assert np.isclose(spectral_norm(M), np.sqrt(gram), rtol=1e-10)


def test_dephasing_closed_form():
    # Gamma = 1, static sigma^z: rho_01(t) = rho_01(0) exp(-2 J^2 t^2)
    p, grid, k, traj = dephasing_setup()
    assert np.allclose(k.values, 1.0)
    plus = 0.5 * np.ones((2, 2))
    states = integrate_redfield(p, k, traj, grid, rho0=plus)
    t = grid.points
    assert np.allclose(states[:, 0, 1], 0.5 * np.exp(-2 * p.J**2 * t**2), atol=1e-9)
    assert np.allclose(states[:, 0, 0], 0.5)


def test_dephasing_bounds_closed_form():
    p, grid, k, traj = dephasing_setup()
    series = qsl_bounds(p, k, grid, traj=traj, compute_exact=False)
    t = grid.points
    # relaxed integrand 4 J^2 t, so the bound is exp(-4 J^2 t^2)
    assert np.allclose(series.bound_state_relaxed, np.exp(-4 * p.J**2 * t**2), atol=1e-12)
    # |1><1| is a fixed point of pure dephasing
    assert np.allclose(series.otoc_redfield, 1.0)
    assert np.allclose(series.bound_state_direct, 1.0)


def test_integrator_contracts(p5_setup):
    p, grid, k, traj = p5_setup
    with warnings.catch_warnings():
        warnings.simplefilter("error", InvariantWarning)
        states = integrate_redfield(p, k, traj, grid)
    assert np.abs(np.trace(states, axis1=1, axis2=2) - 1).max() < 1e-8
    assert np.abs(states - states.conj().transpose(0, 2, 1)).max() < 1e-10
    assert np.allclose(states[0], excited_projector())


def test_integrator_rejects_long_grid(p5_setup):
    p, grid, k, traj = p5_setup
    with pytest.raises(IndexError):
        integrate_redfield(p, k, traj, grid.refined(2))


def test_redfield_tracks_exact_early(p5_setup):
    p, grid, k, traj = p5_setup
    s = qsl_bounds(p, k, grid, traj=traj)
    early = p.J * grid.points <= 0.6
    assert np.abs(s.otoc_redfield - s.otoc_exact)[early].max() < 0.02


def test_bound_series_shape_and_monotonicity(p5_setup):
    p, grid, k, traj = p5_setup
    s = qsl_bounds(p, k, grid, traj=traj)
    for b in (s.bound_liouville, s.bound_state_direct, s.bound_state_relaxed):
        assert b[0] == 1.0
        assert np.all(np.diff(b) <= 0)
    assert np.all(s.bound_state_relaxed <= s.bound_state_direct + 1e-15)
    assert np.all(s.bound_liouville <= s.otoc_exact + 1e-12)
    assert s.bound_state is s.bound_state_direct


def test_liouville_integrand_definition(p5_setup):
    p, grid, k, traj = p5_setup
    s = qsl_bounds(p, k, grid, traj=traj, compute_exact=False)
    M = liouvillian_matrix(25, k, traj, p.J)
    L = 1j * M
    assert np.isclose(s.diagnostics["liouville_integrand"][25], spectral_norm(L - L.conj().T))
    c = qsl_bounds(p, k, grid, traj=traj, compute_exact=False, liouville_norm="coherent")
    assert np.isclose(c.diagnostics["liouville_integrand"][25], spectral_norm(M - M.conj().T))


def test_qsl_bounds_option_errors(p5_setup):
    p, grid, k, traj = p5_setup
    for kw in ({"state_source": "x"}, {"relaxed": "x"}, {"liouville_norm": "x"}):
        with pytest.raises(ValueError):
            qsl_bounds(p, k, grid, traj=traj, compute_exact=False, **kw)


def test_signed_relaxed_variant_is_not_tighter(p5_setup):
    p, grid, k, traj = p5_setup
    a = qsl_bounds(p, k, grid, traj=traj, compute_exact=False)
    b = qsl_bounds(p, k, grid, traj=traj, compute_exact=False, relaxed="re")
    assert np.all(b.bound_state_relaxed >= a.bound_state_relaxed - 1e-15)


def test_cumulative_trapezoid_matches_scipy(rng):
    f = rng.standard_normal(30)
    ref = integrate.cumulative_trapezoid(f, dx=0.1, initial=0.0)
    assert np.allclose(cumulative_trapezoid(f, 0.1), ref)


def test_scrambling_rate_flags_nonpositive():
    grid = TimeGrid(0.1, 3)
    ones = np.ones(4)
    s = BoundSeries(grid, np.array([1.0, 0.9, 0.8, 0.7]), ones, np.array([1.0, 0.5, 0.0, -1e-3]), ones, ones)
    out = scrambling_rate(s)
    assert out.flags["bound_liouville"] == [2, 3]
    assert np.all(np.isfinite(out.rate_liouville))
    assert np.isclose(out.rate_exact[1], -np.log(0.9))


def test_fit_rate():
    t = np.linspace(0, 1, 11)
    assert np.isclose(fit_rate(t, 3 * t + 1), 3.0)
    assert np.isclose(fit_rate(t, np.where(t < 0.5, 2 * t, 0), (0, 0.4)), 2.0)
    with pytest.raises(ValueError):
        fit_rate(t, t, (0.05, 0.06))


def test_timescales(caplog):
    p = ChainParams()
    k = stationary_kernel(p)
    ts = timescales(p, k)
    assert set(ts) == {"tau_A", "tau_I", "tau_B", "hierarchy_ok"}
    assert np.isclose(ts["tau_I"], 1 / p.J)
    assert ts["hierarchy_ok"] is False
    assert "hierarchy" in caplog.text
