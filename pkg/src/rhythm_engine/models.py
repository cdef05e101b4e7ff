from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Literal

import numpy as np
from pydantic import (
    AliasChoices,
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

# Fixed coefficients of the conductance system.
DEFAULT_A1 = -0.01
DEFAULT_A2 = 0.1
DEFAULT_B = 11.9
DEFAULT_C = 6.6e-4


class InvalidParametersError(ValueError):
    pass


class ModelParams(BaseModel):
    """
    Coefficients of the E/I conductance system.

    a1, a2, b, c are the fixed coefficients; K, epsilon and gamma are the ones that
    wander in the stochastic model. Time is read in milliseconds.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    a1: float = DEFAULT_A1
    a2: float = DEFAULT_A2
    b: float = Field(DEFAULT_B, gt=0)
    c: float = Field(DEFAULT_C, gt=0)
    K: float = Field(..., gt=0)
    epsilon: float = Field(..., gt=0, alias="eps")
    gamma: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check_geometry(self) -> ModelParams:
        if not (self.a1 < 0 < self.a2):
            raise ValueError(f"need a1 < 0 < a2, got a1={self.a1}, a2={self.a2}")
        lhs = self.b * (self.a1 + self.a2) / 2 + self.c
        rhs = 0.25 * self.K * (self.a2 - self.a1) ** 2
        if not lhs > rhs:
            raise ValueError(
                f"K={self.K} violates the unique-intersection condition "
                f"b(a1+a2)/2 + c = {lhs:.6g} > K(a2-a1)^2/4 = {rhs:.6g}"
            )
        return self

    @property
    def midpoint(self) -> float:
        """Abscissa of the parabola's maximum (the jump point A)."""
        return 0.5 * (self.a1 + self.a2)

    @property
    def fold_ordinate(self) -> float:
        """f(0) = -K a1 a2, the ordinate of the fold point on u = 0."""
        return -self.K * self.a1 * self.a2

    @classmethod
    def k_upper_bound(cls, a1: float = DEFAULT_A1, a2: float = DEFAULT_A2,
                      b: float = DEFAULT_B, c: float = DEFAULT_C) -> float:
        """Largest K keeping a single interior nullcline intersection (exclusive)."""
        return (b * (a1 + a2) / 2 + c) / (0.25 * (a2 - a1) ** 2)

    def with_(self, **changes: Any) -> ModelParams:
        """Validated copy with some coefficients replaced."""
        try:
            return ModelParams.model_validate({**self.model_dump(), **changes})
        except ValueError as exc:
            raise InvalidParametersError(str(exc)) from exc


@dataclass(frozen=True, slots=True)
class State:
    """(u, v): magnitudes of the E- and I-conductances, in the closed positive quadrant."""

    u: float
    v: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"non-finite state ({self.u}, {self.v})")
        if self.u < 0 or self.v < 0:
            raise ValueError(f"state ({self.u}, {self.v}) outside the positive quadrant")

    def as_tuple(self) -> tuple[float, float]:
        return (self.u, self.v)


class FixedPointKind(str, Enum):
    SOURCE = "source"
    SINK = "sink"
    SADDLE = "saddle"
    NON_HYPERBOLIC = "non_hyperbolic"


@dataclass(frozen=True)
class FixedPoint:
    location: State
    eigenvalues: tuple[complex, complex]
    kind: FixedPointKind


@dataclass(frozen=True)
class SingularOrbit:
    """
    Closed singular curve [A,B] + [B,C] + [C,D] + arc of v = f(u) from D back to A.

    `polyline` is an (n, 2) array starting and ending at A.
    """

    a: State
    b: State
    c: State
    d: State
    polyline: np.ndarray

    @property
    def is_closed(self) -> bool:
        return bool(np.array_equal(self.polyline[0], self.polyline[-1]))

    @property
    def arc(self) -> np.ndarray:
        """Samples of the parabola arc, from D to A."""
        return self.polyline[3:]


class IntegrationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: float | None = Field(None, gt=0, description="Step in ms; None -> min(0.01, eps/10).")
    t_end: float = Field(2500.0, ge=0)
    record_stride: int = Field(1, ge=1)
    record_dt: float | None = Field(
        None, gt=0, description="Sampling interval in ms; overrides record_stride when set."
    )
    transient_discard: float = Field(500.0, ge=0)
    state_floor: float = Field(1e-12, ge=0)

    @model_validator(mode="after")
    def _check_span(self) -> IntegrationConfig:
        if self.t_end < self.transient_discard:
            raise ValueError(
                f"t_end={self.t_end} must not be shorter than transient_discard="
                f"{self.transient_discard}"
            )
        return self

    def resolve_dt(self, epsilon: float) -> float:
        return self.dt if self.dt is not None else min(0.01, epsilon / 10.0)

    def resolve_stride(self, dt: float) -> int:
        if self.record_dt is None:
            return self.record_stride
        return steps_per(self.record_dt, dt, what="record_dt")

    def n_steps(self, dt: float) -> int:
        return int(math.floor(self.t_end / dt + 1e-9))


def steps_per(interval: float, dt: float, *, what: str) -> int:
    """Integer number of dt steps in interval; raises if interval is not a multiple of dt."""
    ratio = interval / dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-6 * max(1.0, ratio):
        raise ValueError(f"{what}={interval} is not a positive integer multiple of dt={dt}")
    return n


@dataclass
class Trajectory:
    """Uniformly sampled solution of the conductance system."""

    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    params_used: ModelParams
    dt: float
    floored_steps: int = 0

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def states(self) -> list[State]:
        return [State(float(a), float(b)) for a, b in zip(self.u, self.v)]

    @property
    def sample_dt(self) -> float:
        if len(self) < 2:
            return self.dt
        return float(self.times[1] - self.times[0])

    def state_at(self, i: int) -> State:
        return State(float(self.u[i]), float(self.v[i]))

    def after(self, t: float) -> Trajectory:
        """Samples with time >= t."""
        mask = self.times >= t - 1e-9
        return Trajectory(
            times=self.times[mask],
            u=self.u[mask],
            v=self.v[mask],
            params_used=self.params_used,
            dt=self.dt,
            floored_steps=self.floored_steps,
        )


class Direction(str, Enum):
    UP = "up"
    DOWN = "down"
    BOTH = "both"


class EventSpec(BaseModel):
    """A crossing section from the fixed catalog u_crosses(value) / v_crosses(value)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    variable: Literal["u", "v"]
    value: float
    direction: Direction = Direction.UP

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("section value must be finite")
        return value

    @classmethod
    def u_crosses(cls, value: float, direction: Direction = Direction.UP) -> EventSpec:
        return cls(variable="u", value=value, direction=direction)

    @classmethod
    def v_crosses(cls, value: float, direction: Direction = Direction.UP) -> EventSpec:
        return cls(variable="v", value=value, direction=direction)

    def crossed(self, prev: float, cur: float) -> bool:
        """Whether the section is crossed between two consecutive offsets (x - value)."""
        up = prev < 0.0 <= cur
        down = prev > 0.0 >= cur
        if self.direction is Direction.UP:
            return up
        if self.direction is Direction.DOWN:
            return down
        return up or down


@dataclass(frozen=True)
class Event:
    t: float
    state: State


WalkPreset = Literal["broad_k", "narrow_k"]


class WalkConfig(BaseModel):
    """Random walk of (K, eps, gamma): ranges, step sizes and update interval."""

    model_config = ConfigDict(extra="forbid")

    K_range: tuple[float, float] = Field(
        (30.0, 100.0), validation_alias=AliasChoices("K_range", "k_range")
    )
    eps_range: tuple[float, float] = (0.04, 0.1)
    f_range: tuple[float, float] = (0.2, 0.5)
    update_interval: float = Field(0.1, gt=0)
    K_step: float = Field(0.1, ge=0, validation_alias=AliasChoices("K_step", "k_step"))
    eps_step: float = Field(0.01, ge=0)
    gamma_step: float = Field(0.1, ge=0)
    max_redraws: int = Field(1000, ge=1)
    min_gamma_acceptance: float = Field(
        0.05,
        ge=0,
        le=1,
        description="Minimum accepted fraction of the gamma candidate span for an eps draw.",
    )
    seed: int = Field(1, ge=0, lt=2**64)

    @field_validator("K_range", "eps_range", "f_range")
    @classmethod
    def _nonempty(cls, value: tuple[float, float]) -> tuple[float, float]:
        lo, hi = value
        if not lo < hi:
            raise ValueError(f"range [{lo}, {hi}] must satisfy min < max")
        return value

    @field_validator("f_range")
    @classmethod
    def _positive_f(cls, value: tuple[float, float]) -> tuple[float, float]:
        if value[0] <= 0:
            raise ValueError("f_range must lie in (0, inf)")
        return value

    @classmethod
    def preset(cls, name: WalkPreset, **overrides: Any) -> WalkConfig:
        ranges = {"broad_k": (30.0, 100.0), "narrow_k": (30.0, 50.0)}
        if name not in ranges:
            raise ValueError(f"unknown walk preset {name!r}; choose from {sorted(ranges)}")
        return cls(**{"K_range": ranges[name], **overrides})

    def initial_values(self) -> tuple[float, float, float]:
        """Range midpoints: (K0, eps0, gamma0) with eps0 * gamma0 at the f_range midpoint."""
        k0 = 0.5 * sum(self.K_range)
        eps0 = 0.5 * sum(self.eps_range)
        return k0, eps0, 0.5 * sum(self.f_range) / eps0


@dataclass
class StochasticTrajectory:
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    K_trace: np.ndarray
    eps_trace: np.ndarray
    gamma_trace: np.ndarray
    seed: int
    dt: float
    interventions: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def sample_dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else self.dt


Channel = Literal["v", "u", "u_bar", "e_current"]


class SpectralConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T_window: float = Field(200.0, gt=0, validation_alias=AliasChoices("T_window", "t_window"))
    shift: float = Field(0.1, gt=0)
    t0: float = Field(500.0, ge=0)
    t1: float = 2500.0
    sample_dt: float = Field(0.1, gt=0)
    channel: Channel = "v"

    @model_validator(mode="after")
    def _check_grid(self) -> SpectralConfig:
        steps_per(self.T_window, self.sample_dt, what="T_window")
        steps_per(self.shift, self.sample_dt, what="shift")
        if self.t1 - self.t0 < self.T_window - 1e-9:
            raise ValueError(
                f"span [{self.t0}, {self.t1}] is shorter than the window T={self.T_window}"
            )
        return self

    @property
    def window_samples(self) -> int:
        return steps_per(self.T_window, self.sample_dt, what="T_window")

    @property
    def shift_samples(self) -> int:
        return steps_per(self.shift, self.sample_dt, what="shift")

    @property
    def n_windows(self) -> int:
        return int(math.floor((self.t1 - self.t0 - self.T_window) / self.shift + 1e-9)) + 1

    @property
    def bin_spacing_hz(self) -> float:
        return 1000.0 / self.T_window


@dataclass
class PsdResult:
    freqs_hz: np.ndarray
    power: np.ndarray
    n_windows: int

    @property
    def n_bins(self) -> int:
        return int(self.freqs_hz.shape[0])


@dataclass
class Spectrogram:
    """Per-window power; bins 0..N/2 (the input is real, so the rest mirror these)."""

    window_starts_ms: np.ndarray
    freqs_hz: np.ndarray
    power: np.ndarray

    def mean_power(self) -> np.ndarray:
        from src.rhythm_engine.spectral import compensated_row_mean

        return compensated_row_mean(self.power)

    def mean_psd(self) -> PsdResult:
        """Window-averaged power as a full N-bin PSD, the upper half mirrored from bins 1..N/2-1."""
        half = self.mean_power()
        full = np.concatenate([half, half[-2:0:-1]])
        spacing = float(self.freqs_hz[1] - self.freqs_hz[0])
        return PsdResult(
            freqs_hz=np.arange(full.shape[0]) * spacing, power=full, n_windows=len(self.power)
        )
