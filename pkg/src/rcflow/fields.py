"""Analytic conditional velocity fields and the toy scene they relight.

The scene renderer decomposes its output exactly the way the condition
bundle decomposes: structure and the foreground footprint come from
agnostic_params, illumination gain and background come from illum_params.
That makes "change only the lighting" a checkable statement at desk scale.

Field catalogue:
  constant_field      fixed velocity everywhere; closed-form trajectories
  point_field         pulls straight at the rendered target; Euler-exact
  mixture_field       posterior-mean flow over a fixed point-mass mixture
  scene_mixture_field mixture whose components are built per condition
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import ConditionBundle, VelocityField, sample_noise
from .errors import NumericError, ShapeMismatchError
from .latent import LatentField, Mask, Shape, freq_decompose
from .rng import derive_seed, uniform_open

AGNOSTIC_ARITY = 3  # (pattern_seed, blob_count, motion)
ILLUM_ARITY = 4  # (gain, tilt, angle, background_level)

# soft prior only: structural fields nudge the pattern, never replace it
STRUCTURAL_WEIGHT = 0.1

# low-pass threshold for the smooth perturbations of scene mixtures
_SMOOTH_RHO = 0.25


def _check_arity(params: tuple[float, ...], arity: int, name: str) -> None:
    if len(params) != arity:
        raise ValueError(f"{name} arity mismatch: expected {arity} values, got {len(params)}")


@dataclass(frozen=True)
class ToyScene:
    """Procedural relightable scene on a fixed latent shape.

    Rendering rule: mask * (structure * gain) + (1 - mask) * background.

    structure: sum of seeded Gaussian blobs drifting frame to frame, driven
    by agnostic_params = (pattern_seed, blob_count, motion); identical for
    every channel. The foreground mask is the blob support above
    mask_threshold * peak. gain is a tilted directional ramp and background
    a constant level, both driven by illum_params = (gain, tilt, angle,
    background_level).

    A bundle's structural field, when present, is added to the pattern at
    weight STRUCTURAL_WEIGHT (after the mask is derived). A reference_frame
    replaces frame 0 of the render outright.
    """

    shape: Shape
    mask_threshold: float = 0.3

    def structure(self, agnostic_params: tuple[float, ...]) -> np.ndarray:
        _check_arity(agnostic_params, AGNOSTIC_ARITY, "agnostic_params")
        pattern_seed = int(round(agnostic_params[0]))
        blob_count = max(1, int(round(agnostic_params[1])))
        motion = float(agnostic_params[2])
        f, c, h, w = self.shape.as_tuple()

        u = uniform_open(derive_seed(pattern_seed, 0xB10B), 5 * blob_count).reshape(blob_count, 5)
        cy = (0.2 + 0.6 * u[:, 0]) * (h - 1)
        cx = (0.2 + 0.6 * u[:, 1]) * (w - 1)
        sigma = (0.08 + 0.12 * u[:, 2]) * max(2.0, min(h, w))
        amp = 0.6 + 0.8 * u[:, 3]
        drift = 2.0 * math.pi * u[:, 4]

        ys = np.arange(h)[:, None]
        xs = np.arange(w)[None, :]
        frames = np.zeros((f, h, w))
        for fi in range(f):
            dy = cy + motion * fi * np.sin(drift)
            dx = cx + motion * fi * np.cos(drift)
            for j in range(blob_count):
                d2 = (ys - dy[j]) ** 2 + (xs - dx[j]) ** 2
                frames[fi] += amp[j] * np.exp(-d2 / (2.0 * sigma[j] ** 2))
        return np.broadcast_to(frames[:, None, :, :], (f, c, h, w)).copy()

    def gain_field(self, illum_params: tuple[float, ...]) -> np.ndarray:
        _check_arity(illum_params, ILLUM_ARITY, "illum_params")
        gain, tilt, angle, _ = (float(v) for v in illum_params)
        h, w = self.shape.height, self.shape.width
        yc = np.arange(h)[:, None] - (h - 1) / 2.0
        xc = np.arange(w)[None, :] - (w - 1) / 2.0
        proj = math.cos(angle) * xc + math.sin(angle) * yc
        peak = float(np.max(np.abs(proj)))
        ramp = proj / peak if peak > 0.0 else np.zeros((h, w))
        return gain + tilt * ramp

    def background(self, illum_params: tuple[float, ...]) -> np.ndarray:
        _check_arity(illum_params, ILLUM_ARITY, "illum_params")
        level = float(illum_params[3])
        return np.full((self.shape.height, self.shape.width), level)

    def true_mask(self, agnostic_params: tuple[float, ...]) -> Mask:
        pattern = self.structure(agnostic_params)[:, :1, :, :]
        cut = self.mask_threshold * float(pattern.max())
        return Mask((pattern > cut).astype(np.float64))


def render_target(scene: ToyScene, c: ConditionBundle) -> LatentField:
    """Deterministic ground-truth render of the scene under a bundle."""
    pattern = scene.structure(c.agnostic_params)
    mask = scene.true_mask(c.agnostic_params).data
    if c.structural is not None:
        if c.structural.data.shape != pattern.shape:
            raise ShapeMismatchError(
                f"structural field {c.structural.data.shape} does not match scene {pattern.shape}"
            )
        pattern = pattern + STRUCTURAL_WEIGHT * c.structural.data
    gain = scene.gain_field(c.illum_params)
    background = scene.background(c.illum_params)
    rendered = mask * (pattern * gain) + (1.0 - mask) * background
    if c.reference_frame is not None:
        ref = c.reference_frame.data
        if ref.shape[1:] != rendered.shape[1:]:
            raise ShapeMismatchError(
                f"reference_frame {ref.shape} does not match scene frames {rendered.shape}"
            )
        rendered = rendered.copy()
        rendered[0] = ref[0]
    return LatentField(rendered)


@dataclass(frozen=True)
class MixtureDataset:
    """Weighted point-mass targets; weights are normalized on construction."""

    components: tuple[tuple[float, LatentField], ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        shapes = {point.data.shape for _, point in self.components}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"mixture components disagree on shape: {shapes}")
        weights = np.array([float(w) for w, _ in self.components])
        if np.any(weights < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        total = float(weights.sum())
        if total <= 0.0:
            raise ValueError("mixture weights must not all be zero")
        normalized = tuple((float(w) / total, point) for w, point in self.components)
        object.__setattr__(self, "components", normalized)

    @property
    def points(self) -> np.ndarray:
        return np.stack([point.data for _, point in self.components])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])


class _ConstantField(VelocityField):
    """Velocity k everywhere, ignoring latent, time, and condition."""

    def __init__(self, k: LatentField):
        self.k = k

    def evaluate(self, z: LatentField, t: float, c: ConditionBundle) -> LatentField:
        if z.data.shape != self.k.data.shape:
            raise ShapeMismatchError(f"constant field is {self.k.data.shape}, latent is {z.data.shape}")
        return self.k


def constant_field(k: LatentField) -> VelocityField:
    return _ConstantField(k)


class _RenderCache:
    """Append-only (bundle, value) cache; safe to rebuild concurrently."""

    def __init__(self, build):
        self._build = build
        self._entries: list[tuple[ConditionBundle, object]] = []

    def get(self, c: ConditionBundle):
        for bundle, value in self._entries:
            if bundle == c:
                return value
        value = self._build(c)
        self._entries.append((c, value))
        return value


class _PointField(VelocityField):
    """Pulls straight toward the scene render for the active condition.

    Along the exact interpolation path the velocity is constant, so Euler
    integration lands on the render regardless of the schedule.
    """

    def __init__(self, scene: ToyScene):
        self.scene = scene
        self._cache = _RenderCache(lambda c: render_target(scene, c))

    def evaluate(self, z: LatentField, t: float, c: ConditionBundle) -> LatentField:
        if t <= 0.0:
            raise ValueError("point field is undefined at t <= 0")
        target = self._cache.get(c)
        if target.data.shape != z.data.shape:
            raise ShapeMismatchError(f"scene is {target.data.shape}, latent is {z.data.shape}")
        return LatentField((target.data - z.data) / t)


def point_field(scene: ToyScene) -> VelocityField:
    return _PointField(scene)


def _posterior_mean_stable(z: np.ndarray, t: float, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Mixture posterior mean with max-shifted exponents.

    Falls back to the nearest component (lowest index on ties) if every
    shifted weight still vanishes.
    """
    flat = points.reshape(points.shape[0], -1)
    diff = flat * (1.0 - t) - z.reshape(-1)
    d2 = np.sum(diff * diff, axis=1)
    with np.errstate(divide="ignore"):
        exponents = np.log(weights) - d2 / (2.0 * t * t)
    peak = float(np.max(exponents))
    if not np.isfinite(peak):
        return points[int(np.argmin(d2))]
    shifted = np.exp(exponents - peak)
    total = float(shifted.sum())
    if total <= 0.0 or not np.isfinite(total):
        return points[int(np.argmin(d2))]
    return np.tensordot(shifted / total, points, axes=(0, 0))


class _MixtureField(VelocityField):
    """Posterior-mean flow over one fixed dataset, shared by all conditions."""

    def __init__(self, data: MixtureDataset):
        self.data = data
        self._points = data.points
        self._weights = data.weights

    def evaluate(self, z: LatentField, t: float, c: ConditionBundle) -> LatentField:
        if t <= 0.0:
            raise ValueError("mixture field is undefined at t <= 0")
        if self._points.shape[1:] != z.data.shape:
            raise ShapeMismatchError(
                f"mixture components are {self._points.shape[1:]}, latent is {z.data.shape}"
            )
        mean = _posterior_mean_stable(z.data, t, self._points, self._weights)
        return LatentField((mean - z.data) / t)


def mixture_field(data: MixtureDataset) -> VelocityField:
    return _MixtureField(data)


def _smooth_perturbations(shape: Shape, count: int, seed: int) -> list[np.ndarray]:
    """Unit-peak low-frequency fields, shared across conditions by index."""
    out = []
    for j in range(count):
        noise = sample_noise(derive_seed(seed, j + 1), shape)
        low = freq_decompose(noise, _SMOOTH_RHO).low.data
        peak = float(np.max(np.abs(low)))
        out.append(low / peak if peak > 0.0 else low)
    return out


class _SceneMixtureField(VelocityField):
    """Mixture flow whose components are built per condition bundle.

    Component 0 is the exact render; the rest add fixed smooth perturbations
    at `spread` amplitude. The perturbations are keyed by index only, so
    source and target datasets wander in parallel.
    """

    def __init__(self, scene: ToyScene, components: int, spread: float, seed: int):
        if components < 1:
            raise ValueError("components must be >= 1")
        self.scene = scene
        self.spread = float(spread)
        self._perturbations = _smooth_perturbations(scene.shape, components - 1, seed)
        self._cache = _RenderCache(self._build_dataset)

    def _build_dataset(self, c: ConditionBundle) -> MixtureDataset:
        base = render_target(self.scene, c)
        members = [(1.0, base)]
        for pattern in self._perturbations:
            members.append((1.0, LatentField(base.data + self.spread * pattern)))
        return MixtureDataset(tuple(members))

    def evaluate(self, z: LatentField, t: float, c: ConditionBundle) -> LatentField:
        if t <= 0.0:
            raise ValueError("mixture field is undefined at t <= 0")
        data = self._cache.get(c)
        mean = _posterior_mean_stable(z.data, t, data.points, data.weights)
        return LatentField((mean - z.data) / t)


def scene_mixture_field(
    scene: ToyScene, components: int = 3, spread: float = 0.3, seed: int = 1
) -> VelocityField:
    return _SceneMixtureField(scene, components, spread, seed)


def oracle_posterior_mean(z: LatentField, t: float, data: MixtureDataset) -> LatentField:
    """Literal extended-precision posterior mean; no stability tricks.

    Test-only reference for the mixture fields. Raises NumericError when
    every unshifted weight underflows, which is exactly the regime the
    production path's max-shift exists for.
    """
    if t <= 0.0:
        raise ValueError("posterior mean is undefined at t <= 0")
    zl = z.data.astype(np.longdouble).reshape(-1)
    total = np.longdouble(0.0)
    accum = np.zeros_like(zl)
    for weight, point in data.components:
        pl = point.data.astype(np.longdouble).reshape(-1)
        diff = zl - (1.0 - np.longdouble(t)) * pl
        w = np.longdouble(weight) * np.exp(-(diff @ diff) / (2.0 * np.longdouble(t) ** 2))
        total += w
        accum += w * pl
    if total <= 0.0:
        raise NumericError("all mixture weights underflowed in the oracle")
    return LatentField((accum / total).astype(np.float64).reshape(z.data.shape))
