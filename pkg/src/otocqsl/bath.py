"""Two-point correlators Gamma(t, s) = <sigma_2^z(t) sigma_2^z(s)> of the bath (sites 2..N)."""
import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from . import _kernels
from .exact_dynamics import initial_state, thermal_state
from .params import ChainParams, TimeGrid
from .spinchain import build_chain_hamiltonian, decompose, site_operator


@dataclass
class CorrelatorKernel:
    """Gamma on a time grid.

    Stationary kernels store Gamma(tau_n) for tau_n >= 0 (1-D); negative lags
    are conjugates. Non-stationary kernels store Gamma(t_m, s_k) in the lower
    triangle k <= m of a square array.
    """

    grid: TimeGrid
    stationary: bool
    values: np.ndarray

    def value(self, m: int, k: int) -> complex:
        if self.stationary:
            return self.values[m - k] if m >= k else np.conj(self.values[k - m])
        if k > m:
            raise IndexError("non-stationary kernel stores s <= t only")
        return self.values[m, k]

    def row(self, m: int) -> np.ndarray:
        """Gamma(t_m, s_k) for k = 0..m."""
        if m >= len(self.values):
            raise IndexError(f"kernel grid has {len(self.values)} points, index {m} requested")
        if self.stationary:
            return self.values[m::-1].copy()
        return self.values[m, : m + 1].copy()

    def rows(self) -> np.ndarray:
        """Square array with Gamma(t_m, s_k) in the lower triangle and zeros above it."""
        n = len(self.values)
        if not self.stationary:
            return np.tril(self.values)
        m, k = np.indices((n, n))
        out = self.values[np.clip(m - k, 0, None)]
        out[k > m] = 0
        return out

    def half_step_row(self, m: int):
        """Linear interpolation at T = t_m + dt/2.

        Returns (Gamma(T, s_k) for k = 0..m, Gamma(T, T)).
        """
        if m + 1 >= len(self.values):
            raise IndexError("half step beyond the kernel grid")
        if self.stationary:
            v = self.values
            lagged = 0.5 * (v[m::-1] + v[m + 1:0:-1])
            return lagged, v[0]
        v = self.values
        inner = 0.5 * (v[m, : m + 1] + v[m + 1, : m + 1])
        return inner, 0.5 * (v[m, m] + v[m + 1, m + 1])

    def diagonal(self) -> np.ndarray:
        if self.stationary:
            return np.full(len(self.values), self.values[0])
        return np.diagonal(self.values).copy()

    def to_csv(self, path):
        """Write columns t, s_or_tau, re_gamma, im_gamma.

        Stationary rows carry Gamma(tau) with t = s_or_tau = tau; non-stationary
        rows carry Gamma(t, s) for s <= t.
        """
        pts = self.grid.points
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "s_or_tau", "re_gamma", "im_gamma"])
            if self.stationary:
                for tau, g in zip(pts, self.values):
                    writer.writerow([fmt(tau), fmt(tau), fmt(g.real), fmt(g.imag)])
            else:
                for m, t in enumerate(pts):
                    for k in range(m + 1):
                        g = self.values[m, k]
                        writer.writerow([fmt(t), fmt(pts[k]), fmt(g.real), fmt(g.imag)])


def fmt(x: float) -> str:
    """12 significant digits, scientific notation."""
    return f"{float(x):.11e}"


def heisenberg_operator(op: np.ndarray, H: np.ndarray, t: float) -> np.ndarray:
    """exp(iHt) op exp(-iHt) via the eigendecomposition of H."""
    E, V = np.linalg.eigh(H)
    U = (V * np.exp(1j * E * t)) @ V.conj().T
    return U @ op @ U.conj().T


def crank_nicolson_step(H: np.ndarray, dt: float) -> np.ndarray:
    """(I + iH dt/2)^-1 (I - iH dt/2), the Cayley approximant of exp(-iH dt)."""
    eye = np.eye(H.shape[0])
    return np.linalg.solve(eye + 0.5j * dt * H, eye - 0.5j * dt * H)


def _bath_operators(params: ChainParams):
    _, H_B, _ = decompose(params)
    z2 = site_operator("z", 1, params.N - 1)
    return H_B, z2


def stationary_kernel(params: ChainParams, grid: TimeGrid = None, backend: str = "eig") -> CorrelatorKernel:
    """Gamma(tau) = tr[sigma_2^z(tau) sigma_2^z rho_B^beta] under H_B.

    ``backend='eig'`` is exact; ``backend='cn'`` steps with Crank-Nicolson.
    With ``correlator_mode='analytic_afm'`` the closed-form effective-model
    correlator replaces the numerical one.
    """
    if grid is None:
        grid = TimeGrid.from_params(params)
    if params.correlator_mode == "analytic_afm":
        return analytic_afm_kernel(params.g, params.N - 1, grid)
    H_B, z = _bath_operators(params)
    if backend == "eig":
        E, V = np.linalg.eigh(H_B)
        p = np.exp(-params.beta * (E - E[0]))
        p /= p.sum()
        zb = V.conj().T @ z @ V
        values = _kernels.spectral_correlator(E, p, np.abs(zb) ** 2, grid.points)
    elif backend == "cn":
        rho = thermal_state(H_B, params.beta)
        U = crank_nicolson_step(H_B, grid.dt)
        Uh = U.conj().T
        X = z @ rho
        values = np.empty(len(grid), dtype=np.complex128)
        for n in range(len(grid)):
            values[n] = np.sum(z * X.T)
            X = U @ X @ Uh
    else:
        raise ValueError(f"unknown propagation backend {backend!r}")
    return CorrelatorKernel(grid=grid, stationary=True, values=values)


def bath_state_series(params: ChainParams, grid: TimeGrid, basis: np.ndarray) -> np.ndarray:
    """tr_A rho(t_n) from exact full-chain evolution, expressed in ``basis``."""
    H = build_chain_hamiltonian(params)
    rho0 = initial_state(params)
    E, V = np.linalg.eigh(H)
    C = V.conj().T @ rho0 @ V
    dB = H.shape[0] // 2
    W = [basis.conj().T @ V[i * dB:(i + 1) * dB] for i in range(2)]
    out = np.empty((len(grid), dB, dB), dtype=np.complex128)
    for n, t in enumerate(grid.points):
        phase = np.exp(-1j * E * t)
        M = phase[:, None] * C * phase.conj()[None, :]
        out[n] = sum(Wi @ M @ Wi.conj().T for Wi in W)
    return out


def nonstationary_kernel(params: ChainParams, grid: TimeGrid = None, frame: str = "interaction") -> CorrelatorKernel:
    """Gamma'(t, s) = tr[sigma_2^z(t) sigma_2^z(s) rho_B(t)] with rho_B(t) from the full chain.

    Operators evolve under H_B alone, so by default rho_B(t) = tr_A rho(t) is
    rotated into the same H_B interaction picture before the trace.
    ``frame='schrodinger'`` uses tr_A rho(t) unrotated.
    """
    if grid is None:
        grid = TimeGrid.from_params(params)
    if frame not in ("schrodinger", "interaction"):
        raise ValueError(f"unknown frame {frame!r}")
    H_B, z = _bath_operators(params)
    E, VB = np.linalg.eigh(H_B)
    zb = VB.conj().T @ z @ VB
    states = bath_state_series(params, grid, VB)
    pts = grid.points
    n = len(pts)
    fwd = np.exp(1j * np.outer(E, pts))  # column k: exp(i E s_k)
    values = np.zeros((n, n), dtype=np.complex128)
    for m in range(n):
        w = fwd[:, m]
        R = states[m]
        if frame == "interaction":
            R = w[:, None] * R * w.conj()[None, :]
        P = (R * w[None, :]) @ zb
        Y = (zb * P.T) @ fwd[:, : m + 1].conj()
        values[m, : m + 1] = (w.conj()[:, None] * fwd[:, : m + 1] * Y).sum(axis=0)
    return CorrelatorKernel(grid=grid, stationary=False, values=values)


def bath_kernel(params: ChainParams, grid: TimeGrid = None) -> CorrelatorKernel:
    """Kernel selected by ``params.bath_mode``."""
    if params.bath_mode == "nonstationary":
        return nonstationary_kernel(params, grid)
    return stationary_kernel(params, grid)


@dataclass
class AfmDispersion:
    """Single-mode data of the effective integrable antiferromagnetic chain."""

    g: float
    n_modes: Optional[int]

    def __post_init__(self):
        if not self.g < 1:
            raise ValueError(f"g={self.g} >= 1 makes the dispersion degenerate")
        if self.n_modes is not None and self.n_modes < 1:
            raise ValueError("n_modes must be positive")

    @property
    def continuum(self) -> bool:
        return self.n_modes is None

    @property
    def k(self) -> np.ndarray:
        return np.pi * np.arange(1, self.n_modes + 1) / self.n_modes

    @property
    def psi(self) -> np.ndarray:
        # k = pi gives sin(pi) ~ 1e-16; pin it so the mode drops out exactly
        s = np.sin(self.k)
        s[-1] = 0.0
        return np.sqrt(2.0 / self.n_modes) * s

    def gamma_of(self, k):
        a = 1.0 - self.g
        return 2.0 * np.sqrt(a * a + 1.0 + 2.0 * a * np.cos(k))

    @property
    def gamma_k(self) -> np.ndarray:
        return self.gamma_of(self.k)


def _afm_weights(disp: AfmDispersion):
    psi, gam = disp.psi, disp.gamma_k
    keep = psi != 0.0
    return 4.0 * psi[keep] ** 2 / gam[keep] ** 2, gam[keep]


def analytic_afm_kernel(g: float, N, grid: TimeGrid, epsrel: float = 1e-9) -> CorrelatorKernel:
    """4 sum_k psi_k^2/Gamma_k^2 exp(-i Gamma_k tau) over k = n pi/N, n = 1..N.

    ``N=None`` (or ``"continuum"``) replaces the sum by (N/pi) int_0^pi dk,
    which makes N cancel: (8/pi) int_0^pi sin^2 k / Gamma(k)^2 exp(-i Gamma(k) tau) dk.
    """
    if N == "continuum":
        N = None
    disp = AfmDispersion(g, N)
    taus = grid.points
    if not disp.continuum:
        weights, freqs = _afm_weights(disp)
        values = np.exp(-1j * np.outer(taus, freqs)) @ weights
        return CorrelatorKernel(grid=grid, stationary=True, values=values.astype(np.complex128))

    def density(k):
        return (8.0 / np.pi) * np.sin(k) ** 2 / disp.gamma_of(k) ** 2

    values = np.empty(len(taus), dtype=np.complex128)
    for j, tau in enumerate(taus):
        re, _ = integrate.quad(lambda k: density(k) * np.cos(disp.gamma_of(k) * tau), 0.0, np.pi,
                               epsabs=0.0, epsrel=epsrel, limit=400)
        im, _ = integrate.quad(lambda k: -density(k) * np.sin(disp.gamma_of(k) * tau), 0.0, np.pi,
                               epsabs=1e-14, epsrel=epsrel, limit=400)
        values[j] = re + 1j * im
    return CorrelatorKernel(grid=grid, stationary=True, values=values)


def decay_time(kernel: CorrelatorKernel, threshold: float = np.exp(-1)) -> float:
    """First grid lag at which |Gamma(tau)| drops below ``threshold``; NaN if never."""
    mags = np.abs(kernel.values if kernel.stationary else np.array([kernel.value(m, 0) for m in range(len(kernel.values))]))
    below = np.nonzero(mags < threshold)[0]
    return float(kernel.grid.points[below[0]]) if below.size else float("nan")
