"""Timestep schedules, the velocity-field interface, and the Euler sampler.

The sampler walks a latent from pure noise at t=1 down to data at t=0 with
the plain Euler update z <- z + dt * V(z, t, c). Velocity fields are only
ever evaluated at the upper knot of each step, so t=0 is never requested
(several analytic fields carry a 1/t factor).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NumericError, ShapeMismatchError
from .latent import LatentField, Shape
from .rng import standard_normal


class Schedule:
    """Strictly increasing timestep knots t_0 = 0 < ... < t_N = 1."""

    __slots__ = ("knots",)

    def __init__(self, knots):
        arr = np.ascontiguousarray(knots, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("schedule needs at least two knots")
        if arr[0] != 0.0 or arr[-1] != 1.0:
            raise ValueError(f"schedule must start at 0 and end at 1, got [{arr[0]}, {arr[-1]}]")
        if not np.all(np.diff(arr) > 0.0):
            raise ValueError("schedule knots must be strictly increasing")
        arr.flags.writeable = False
        object.__setattr__(self, "knots", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Schedule is immutable")

    @property
    def steps(self) -> int:
        return self.knots.size - 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, Schedule):
            return NotImplemented
        return bool(np.array_equal(self.knots, other.knots))

    def __repr__(self) -> str:
        return f"Schedule(steps={self.steps})"


def make_uniform_schedule(steps: int) -> Schedule:
    """Uniform grid with knots i/steps for i = 0..steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return Schedule(np.arange(steps + 1) / steps)


def _param_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class ConditionBundle:
    """Decoupled conditioning record.

    agnostic_params and structural carry information an edit must preserve;
    illum_params carry what it may change. reference_frame, when present,
    anchors frame 0 (a single-frame field).
    """

    illum_params: tuple[float, ...] = ()
    agnostic_params: tuple[float, ...] = ()
    reference_frame: LatentField | None = None
    structural: LatentField | None = None

    def __post_init__(self):
        object.__setattr__(self, "illum_params", _param_tuple(self.illum_params))
        object.__setattr__(self, "agnostic_params", _param_tuple(self.agnostic_params))
        if self.reference_frame is not None and self.reference_frame.shape.frames != 1:
            raise ShapeMismatchError("reference_frame must hold exactly one frame")


def consistent_pair(src: ConditionBundle, tar: ConditionBundle) -> bool:
    """True when only illumination-specific content differs between bundles."""
    return src.agnostic_params == tar.agnostic_params and src.structural == tar.structural


class VelocityField:
    """Deterministic (z, t, c) -> velocity interface.

    Implementations must be pure and re-entrant: identical inputs give
    identical output, output shape equals input shape, output is finite.
    """

    def evaluate(self, z: LatentField, t: float, c: ConditionBundle) -> LatentField:
        raise NotImplementedError


class NfeCounter:
    """Monotone count of velocity-field evaluations within one run."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def increment(self, n: int = 1) -> None:
        self.count += n

    def __repr__(self) -> str:
        return f"NfeCounter({self.count})"


@dataclass
class RunTrace:
    """Trajectory snapshots (t, latent) from t=1 down toward t=0, plus NFE."""

    snapshots: list[tuple[float, LatentField]] = dc_field(default_factory=list)
    nfe: NfeCounter = dc_field(default_factory=NfeCounter)

    def record(self, t: float, z: LatentField) -> None:
        if self.snapshots and t >= self.snapshots[-1][0]:
            raise ValueError("snapshot timesteps must strictly decrease")
        self.snapshots.append((float(t), z))

    @property
    def final(self) -> LatentField:
        return self.snapshots[-1][1]


def checked_evaluate(
    field: VelocityField,
    z: LatentField,
    t: float,
    c: ConditionBundle,
    nfe: NfeCounter,
) -> LatentField:
    """Evaluate a velocity field, count it, and abort loudly on a bad output."""
    try:
        v = field.evaluate(z, t, c)
    except NumericError as exc:
        raise NumericError(f"velocity field failed at t={t}: {exc}") from exc
    nfe.increment()
    if not isinstance(v, LatentField) or v.data.shape != z.data.shape:
        raise ShapeMismatchError(f"velocity field returned an invalid output at t={t}")
    return v


def sample_noise(seed: int, shape: Shape) -> LatentField:
    """Standard-normal latent stack; bit-identical for equal (seed, shape)."""
    values = standard_normal(seed, shape.count)
    return LatentField(values.reshape(shape.as_tuple()))


def euler_step(z: LatentField, t_hi: float, t_lo: float, v: LatentField) -> LatentField:
    """One explicit Euler update z + (t_hi - t_lo) * v."""
    if not t_hi > t_lo:
        raise ValueError(f"step must move down in time, got {t_hi} -> {t_lo}")
    if z.data.shape != v.data.shape:
        raise ShapeMismatchError(f"euler_step: shapes {z.data.shape} and {v.data.shape} differ")
    return LatentField(z.data + (t_hi - t_lo) * v.data)


def generate(
    field: VelocityField,
    c: ConditionBundle,
    eps: LatentField,
    schedule: Schedule,
) -> tuple[LatentField, RunTrace]:
    """Integrate the field from noise at t=1 to a sample at t=0.

    Exactly schedule.steps field evaluations are spent, one per step at the
    step's upper knot.
    """
    trace = RunTrace()
    knots = schedule.knots
    z = eps
    trace.record(knots[-1], z)
    for i in range(schedule.steps, 0, -1):
        v = checked_evaluate(field, z, knots[i], c, trace.nfe)
        try:
            z = euler_step(z, knots[i], knots[i - 1], v)
        except NumericError as exc:
            raise NumericError(f"latent became non-finite stepping to t={knots[i - 1]}") from exc
        trace.record(knots[i - 1], z)
    return z, trace
