"""Simulation parameters and the uniform time grid."""
from dataclasses import dataclass, asdict, replace
from typing import Optional

import numpy as np

MAX_SITES = 12

MODEL_SIGNS = ("ferro", "antiferro")
BATH_MODES = ("stationary", "nonstationary")
CORRELATOR_MODES = ("numeric", "analytic_afm")
STATE_BOUND_MODES = ("direct_norm", "relaxed")


class ParameterError(ValueError):
    """Invalid physical or numerical parameter; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ChainParams:
    """One simulation instance. Defaults are the canonical ferromagnetic run.

    ``J`` is always a magnitude; ``model_sign`` selects the sign of the Ising
    term. ``dt`` and ``t_max`` default to 0.01/J and 1.2/J.
    """

    model_sign: str = "ferro"
    N: int = 10
    J: float = 0.65
    h: float = 0.9
    g: float = 0.4
    beta: float = 1.0
    dt: Optional[float] = None
    t_max: Optional[float] = None
    bath_mode: str = "stationary"
    correlator_mode: str = "numeric"
    state_bound_mode: str = "direct_norm"
    seed: int = 0

    def __post_init__(self):
        scale = abs(self.J) if self.J != 0 else 1.0
        if self.dt is None:
            object.__setattr__(self, "dt", 0.01 / scale)
        if self.t_max is None:
            object.__setattr__(self, "t_max", 1.2 / scale)
        self.validate()

    def validate(self):
        if self.model_sign not in MODEL_SIGNS:
            raise ParameterError("model_sign", f"must be one of {MODEL_SIGNS}")
        if int(self.N) != self.N or not 2 <= self.N <= MAX_SITES:
            raise ParameterError("N", f"must be an integer in [2, {MAX_SITES}]")
        for name in ("J", "h", "g", "beta", "dt", "t_max"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(name, "must be finite")
        if self.J < 0:
            raise ParameterError("J", "is a magnitude; use model_sign='antiferro'")
        if self.beta < 0:
            raise ParameterError("beta", "must be nonnegative")
        if self.dt <= 0:
            raise ParameterError("dt", "must be positive")
        if self.t_max < self.dt:
            raise ParameterError("t_max", "must be at least dt")
        if self.bath_mode not in BATH_MODES:
            raise ParameterError("bath_mode", f"must be one of {BATH_MODES}")
        if self.correlator_mode not in CORRELATOR_MODES:
            raise ParameterError("correlator_mode", f"must be one of {CORRELATOR_MODES}")
        if self.correlator_mode == "analytic_afm" and self.model_sign != "antiferro":
            raise ParameterError("correlator_mode", "analytic_afm requires model_sign='antiferro'")
        if self.state_bound_mode not in STATE_BOUND_MODES:
            raise ParameterError("state_bound_mode", f"must be one of {STATE_BOUND_MODES}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError("seed", "must be an unsigned integer")

    @property
    def ising_sign(self) -> float:
        """Prefactor of J * sum sigma^z sigma^z: -1 for ferro, +1 for antiferro."""
        return -1.0 if self.model_sign == "ferro" else 1.0

    def with_(self, **changes) -> "ChainParams":
        """Copy with fields changed. dt and t_max are not rescaled when J changes."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ChainParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ParameterError(sorted(unknown)[0], "unknown parameter")
        return cls(**data)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n * dt for n = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt", "must be positive")
        if self.n_steps < 1:
            raise ParameterError("n_steps", "must be positive")

    @classmethod
    def from_horizon(cls, dt: float, t_max: float) -> "TimeGrid":
        # the small slack keeps t_max = k*dt from losing its last point to roundoff
        return cls(dt, int(np.floor(t_max / dt + 1e-9)))

    @classmethod
    def from_params(cls, params: ChainParams) -> "TimeGrid":
        return cls.from_horizon(params.dt, params.t_max)

    @property
    def points(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def __len__(self):
        return self.n_steps + 1

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.dt / factor, self.n_steps * factor)
