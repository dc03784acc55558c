"""Time-nonlocal Redfield dynamics of the first spin and the OTOC speed limits.

The memory integral factorises because sigma_1^z(t) does not depend on s:

    rho' = -J^2 [Z_t S rho - S rho Z_t + rho S^dag Z_t - Z_t rho S^dag],
    S(t) = int_0^t Gamma(t, s) Z_s ds,

so every right-hand side and every 4x4 generator is built from the single
2x2 memory operator S(t). Vectorisation is column stacking,
vec(X rho Y) = (Y^T kron X) vec(rho).
"""
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .bath import CorrelatorKernel, decay_time
from .exact_dynamics import (
    InvariantWarning, OtocSeries, exact_average_otoc, excited_projector, initial_state, purity,
    reduced_state_series,
)
from .params import ChainParams, TimeGrid
from .spinchain import PAULI, build_chain_hamiltonian, decompose

log = logging.getLogger(__name__)

EYE2 = np.eye(2, dtype=np.complex128)
LOG_FLOOR = 1e-300


@dataclass
class SystemTrajectory:
    grid: TimeGrid
    ops: np.ndarray  # (n_points, 2, 2): sigma_1^z(t_n) in the H_A interaction picture


def system_trajectory(params: ChainParams, grid: TimeGrid = None) -> SystemTrajectory:
    if grid is None:
        grid = TimeGrid.from_params(params)
    H_A, _, _ = decompose(params)
    E, V = np.linalg.eigh(H_A)
    z = V.conj().T @ PAULI["z"] @ V
    ops = np.empty((len(grid), 2, 2), dtype=np.complex128)
    for n, t in enumerate(grid.points):
        phase = np.exp(1j * E * t)
        ops[n] = V @ (phase[:, None] * z * phase.conj()[None, :]) @ V.conj().T
    return SystemTrajectory(grid=grid, ops=ops)


def vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def unvec(v: np.ndarray, d: int = 2) -> np.ndarray:
    return v.reshape(d, d, order="F")


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    """Weights of the trapezoidal rule on points 0..n (all zero for n = 0)."""
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    if n == 0:
        w[:] = 0.0
    return w


def memory_operator(n: int, kernel: CorrelatorKernel, traj: SystemTrajectory) -> np.ndarray:
    """S(t_n) = int_0^{t_n} Gamma(t_n, s) sigma_1^z(s) ds by the trapezoidal rule."""
    if n >= len(kernel.values) or n >= len(traj.ops):
        raise IndexError(f"grid index {n} outside the kernel/trajectory grid")
    w = trapezoid_weights(n, kernel.grid.dt)
    return np.tensordot(w * kernel.row(n), traj.ops[: n + 1], axes=1)


def rhs_from_memory(rho, z_t, S, J):
    Sh = S.conj().T
    return -J**2 * (z_t @ S @ rho - S @ rho @ z_t + rho @ Sh @ z_t - z_t @ rho @ Sh)


def generator_from_memory(z_t, S, J):
    """4x4 M with vec(rhs_from_memory(rho)) = M vec(rho)."""
    Sh = S.conj().T
    return -J**2 * (
        np.kron(EYE2, z_t @ S)
        - np.kron(z_t.T, S)
        + np.kron((Sh @ z_t).T, EYE2)
        - np.kron(S.conj(), z_t)
    )


def redfield_rhs(rho_A, n: int, kernel: CorrelatorKernel, traj: SystemTrajectory, J: float) -> np.ndarray:
    """Memory-integral derivative of rho_A at grid time t_n."""
    return rhs_from_memory(rho_A, traj.ops[n], memory_operator(n, kernel, traj), J)


def liouvillian_matrix(n: int, kernel: CorrelatorKernel, traj: SystemTrajectory, J: float) -> np.ndarray:
    """Plain vectorised generator M_n; the i|rho'> = L|rho> generator is L_n = i M_n."""
    return generator_from_memory(traj.ops[n], memory_operator(n, kernel, traj), J)


def spectral_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def grid_memory(kernel: CorrelatorKernel, traj: SystemTrajectory) -> np.ndarray:
    """S(t_n) at every grid point, shape (n_points, 2, 2)."""
    n = min(len(kernel.values), len(traj.ops))
    return _kernels.memory_sums(kernel.rows()[:n, :n], traj.ops[:n], kernel.grid.dt)


def half_step_memory(kernel: CorrelatorKernel, traj: SystemTrajectory):
    """S and sigma_1^z at T_m = t_m + dt/2, from linear interpolation of kernel and trajectory."""
    n = min(len(kernel.values), len(traj.ops))
    dt = kernel.grid.dt
    rows = np.zeros((n - 1, n - 1), dtype=np.complex128)
    at_T = np.empty(n - 1, dtype=np.complex128)
    for m in range(n - 1):
        inner, diag = kernel.half_step_row(m)
        rows[m, : m + 1] = inner
        at_T[m] = diag
    z_half = 0.5 * (traj.ops[:-1] + traj.ops[1:])[: n - 1]
    S = _kernels.memory_sums(rows, traj.ops[: n - 1], dt)
    # last half interval [t_m, T_m]
    edge = rows[np.arange(n - 1), np.arange(n - 1)]
    S += 0.25 * dt * (edge[:, None, None] * traj.ops[: n - 1] + at_T[:, None, None] * z_half)
    return S, z_half


def integrate_redfield(params: ChainParams, kernel: CorrelatorKernel, traj: SystemTrajectory,
                       grid: TimeGrid = None, rho0: np.ndarray = None) -> np.ndarray:
    """RK4 solution rho_A(t_n), shape (n_points, 2, 2).

    The state is interaction-picture; its purity equals the Schroedinger one.
    Positivity is not enforced, eigenvalues below -1e-3 are only logged.
    """
    if grid is None:
        grid = kernel.grid
    n_points = len(grid)
    if len(kernel.values) < n_points or len(traj.ops) < n_points:
        raise IndexError("kernel or trajectory shorter than the integration grid")
    if rho0 is None:
        rho0 = excited_projector()
    J, dt = params.J, grid.dt
    S_grid = grid_memory(kernel, traj)
    S_half, z_half = half_step_memory(kernel, traj)
    z = traj.ops
    out = np.empty((n_points, 2, 2), dtype=np.complex128)
    rho = np.asarray(rho0, dtype=np.complex128)
    out[0] = rho
    for n in range(n_points - 1):
        k1 = rhs_from_memory(rho, z[n], S_grid[n], J)
        k2 = rhs_from_memory(rho + 0.5 * dt * k1, z_half[n], S_half[n], J)
        k3 = rhs_from_memory(rho + 0.5 * dt * k2, z_half[n], S_half[n], J)
        k4 = rhs_from_memory(rho + dt * k3, z[n + 1], S_grid[n + 1], J)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[n + 1] = rho
    _check_states(out, grid)
    return out


def _check_states(states, grid):
    traces = np.trace(states, axis1=1, axis2=2)
    if np.max(np.abs(traces - 1)) > 1e-8:
        warnings.warn("Redfield trace drifted beyond 1e-8", InvariantWarning, stacklevel=3)
    herm = np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2))))
    if herm > 1e-10:
        warnings.warn(f"Redfield state non-Hermitian by {herm:.2e}", InvariantWarning, stacklevel=3)
    low = np.linalg.eigvalsh(0.5 * (states + np.conj(np.swapaxes(states, 1, 2))))[:, 0]
    bad = np.nonzero(low < -1e-3)[0]
    if bad.size:
        log.warning("Redfield state loses positivity (min eigenvalue %.3e at t=%g)",
                    low[bad].min(), grid.points[bad[0]])


def cumulative_trapezoid(f: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros(len(f))
    out[1:] = np.cumsum(0.5 * dt * (f[1:] + f[:-1]))
    return out


@dataclass
class BoundSeries:
    grid: TimeGrid
    otoc_exact: Optional[np.ndarray]
    otoc_redfield: np.ndarray
    bound_liouville: np.ndarray
    bound_state_direct: np.ndarray
    bound_state_relaxed: np.ndarray
    rate_exact: Optional[np.ndarray] = None
    rate_liouville: Optional[np.ndarray] = None
    rate_state: Optional[np.ndarray] = None
    fitted_rate: Optional[float] = None
    state_bound_mode: str = "direct_norm"
    flags: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def bound_state(self) -> np.ndarray:
        if self.state_bound_mode == "relaxed":
            return self.bound_state_relaxed
        return self.bound_state_direct


def qsl_bounds(params: ChainParams, kernel: CorrelatorKernel, grid: TimeGrid = None, *,
               traj: SystemTrajectory = None, exact: Optional[OtocSeries] = None, compute_exact: bool = True,
               state_source: str = "redfield", relaxed: str = "abs_re",
               liouville_norm: str = "dissipative") -> BoundSeries:
    """Liouville-space and state-space lower bounds on the averaged OTOC.

    bound_liouville      exp(-int ||L - L^dag||),  L = i M
    bound_state_direct   exp(-2 int ||M vec(rho_A)||_sp)
    bound_state_relaxed  exp(-2 int 4 J^2 int |Re Gamma|)

    ``relaxed='re'`` uses the signed Re Gamma instead; ``state_source='exact'``
    feeds the exact reduced state into the direct bound (diagnostic only);
    ``liouville_norm='coherent'`` integrates ||M - M^dag|| instead of
    ||L - L^dag|| = ||M + M^dag||, which is not a purity bound and exists
    for comparison with published curves.
    """
    if grid is None:
        grid = kernel.grid
    if traj is None:
        traj = system_trajectory(params, grid)
    n = len(grid)
    J, dt = params.J, grid.dt
    if exact is None and (compute_exact or state_source == "exact"):
        exact = exact_average_otoc(params, grid)

    states = integrate_redfield(params, kernel, traj, grid)
    S_grid = grid_memory(kernel, traj)[:n]

    liou = np.empty(n)
    direct = np.empty(n)
    if state_source == "exact":
        rho_states = reduced_state_series(build_chain_hamiltonian(params), initial_state(params), grid)
    elif state_source == "redfield":
        rho_states = states
    else:
        raise ValueError(f"unknown state_source {state_source!r}")
    for m in range(n):
        M = generator_from_memory(traj.ops[m], S_grid[m], J)
        if liouville_norm == "dissipative":
            L = 1j * M
            liou[m] = spectral_norm(L - L.conj().T)
        elif liouville_norm == "coherent":
            liou[m] = spectral_norm(M - M.conj().T)
        else:
            raise ValueError(f"unknown liouville_norm {liouville_norm!r}")
        direct[m] = spectral_norm(unvec(M @ vec(rho_states[m])))
    if relaxed not in ("abs_re", "re"):
        raise ValueError(f"unknown relaxed variant {relaxed!r}")
    rows = kernel.rows()[:n, :n]
    relax = 4 * J**2 * _kernels.abs_re_memory(rows, dt, signed=(relaxed == "re"))

    series = BoundSeries(
        grid=grid,
        otoc_exact=None if exact is None else exact.otoc,
        otoc_redfield=np.array([purity(r) for r in states]),
        bound_liouville=np.exp(-cumulative_trapezoid(liou, dt)),
        bound_state_direct=np.exp(-2 * cumulative_trapezoid(direct, dt)),
        bound_state_relaxed=np.exp(-2 * cumulative_trapezoid(relax, dt)),
        state_bound_mode=params.state_bound_mode,
        diagnostics={
            "liouville_integrand": liou,
            "state_direct_integrand": direct,
            "state_relaxed_integrand": relax,
            "redfield_states": states,
        },
    )
    return scrambling_rate(series)


def _log_rate(values, name, flags):
    v = np.asarray(values, dtype=float)
    bad = np.nonzero(v <= 0)[0]
    if bad.size:
        flags[name] = bad.tolist()
    return np.abs(np.log(np.clip(v, LOG_FLOOR, None)))


def scrambling_rate(series: BoundSeries, fit_window=None) -> BoundSeries:
    """Populate |ln(.)| rate curves and the fitted early-time slope of the exact one.

    ``fit_window`` is a (t_start, t_end) pair; default is the whole grid.
    The slope is descriptive: the averaged OTOC need not decay exponentially.
    """
    flags = dict(series.flags)
    out = replace(series, flags=flags)
    out.rate_liouville = _log_rate(series.bound_liouville, "bound_liouville", flags)
    out.rate_state = _log_rate(series.bound_state, "bound_state", flags)
    if series.otoc_exact is not None:
        out.rate_exact = _log_rate(series.otoc_exact, "otoc_exact", flags)
        out.fitted_rate = fit_rate(series.grid.points, out.rate_exact, fit_window)
    return out


def fit_rate(t, rate, window=None) -> float:
    t = np.asarray(t)
    mask = np.ones(len(t), dtype=bool)
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 2:
        raise ValueError("fit window holds fewer than two points")
    slope, _ = np.polyfit(t[mask], np.asarray(rate)[mask], 1)
    return float(slope)


def timescales(params: ChainParams, kernel: CorrelatorKernel) -> dict:
    """tau_A, tau_I, measured tau_B (1/e decay of |Gamma|) and whether tau_B << tau_I << tau_A holds."""
    tau_A = 1.0 / (2.0 * np.hypot(params.h, params.g)) if (params.h or params.g) else float("inf")
    tau_I = 1.0 / params.J if params.J else float("inf")
    tau_B = decay_time(kernel)
    ok = bool(np.isfinite(tau_B) and tau_B < tau_I < tau_A)
    if not ok:
        log.warning("timescale hierarchy tau_B << tau_I << tau_A fails: tau_B=%g tau_I=%g tau_A=%g",
                    tau_B, tau_I, tau_A)
    return {"tau_A": tau_A, "tau_I": tau_I, "tau_B": tau_B, "hierarchy_ok": ok}
