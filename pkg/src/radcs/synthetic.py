"""Synthetic radar scenes: moving rectangular targets on a speckle floor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .detector import GroundTruthBox
from .geometry import (
    DEFAULT_GEOMETRY,
    FRAME_PERIOD_S,
    FrameGeometry,
    PolarFrame,
)

MAX_SPEED_MPS = 35.8  # 80 mph
_SUBSAMPLES = 3


class SceneSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Target:
    """Axis-aligned rectangle moving at constant velocity.

    ``x_m``/``y_m`` is the centre at the first frame; ``width_m`` is the
    extent along x and ``height_m`` along y.
    """

    x_m: float
    y_m: float
    vx_mps: float = 0.0
    vy_mps: float = 0.0
    width_m: float = 1.8
    height_m: float = 4.5
    intensity: float = 200.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx_mps, self.vy_mps)

    def center_at(self, k: int) -> tuple[float, float]:
        t = k * FRAME_PERIOD_S
        return self.x_m + self.vx_mps * t, self.y_m + self.vy_mps * t


@dataclass(frozen=True)
class SceneSpec:
    targets: tuple = ()
    n_frames: int = 20
    noise_level: float = 0.0
    blur_sigma_px: float = 1.0
    seed: int = 0
    first_frame_id: int = 1

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.n_frames < 1:
            raise SceneSpecError("a scene needs at least one frame")
        if self.noise_level < 0:
            raise SceneSpecError("noise_level must be non-negative")


def _corners(cx: float, cy: float, t: Target):
    hw, hh = t.width_m / 2, t.height_m / 2
    return [(cx + sx * hw, cy + sy * hh) for sx in (-1, 1) for sy in (-1, 1)]


def validate(spec: SceneSpec, geom: FrameGeometry = DEFAULT_GEOMETRY) -> None:
    """Raise :class:`SceneSpecError` if any target is too fast or leaves the disc."""
    for i, t in enumerate(spec.targets):
        if t.width_m <= 0 or t.height_m <= 0 or t.intensity <= 0:
            raise SceneSpecError(f"target {i}: extents and intensity must be positive")
        if t.speed > MAX_SPEED_MPS:
            raise SceneSpecError(f"target {i}: speed {t.speed:.1f} m/s exceeds {MAX_SPEED_MPS} m/s")
        for k in range(spec.n_frames):
            cx, cy = t.center_at(k)
            x0, x1 = cx - t.width_m / 2, cx + t.width_m / 2
            y0, y1 = cy - t.height_m / 2, cy + t.height_m / 2
            if x0 <= 0 <= x1 and y0 <= 0 <= y1:
                raise SceneSpecError(f"target {i} covers the radar origin at frame {k}")
            if any(math.hypot(x, y) >= geom.max_range_m for x, y in _corners(cx, cy, t)):
                raise SceneSpecError(f"target {i} leaves the {geom.max_range_m:g} m disc at frame {k}")


def _rect_range_window(cx, cy, t: Target, geom: FrameGeometry) -> tuple[int, int]:
    x0, x1 = cx - t.width_m / 2, cx + t.width_m / 2
    y0, y1 = cy - t.height_m / 2, cy + t.height_m / 2
    near = math.hypot(max(x0, 0.0, -x1), max(y0, 0.0, -y1))
    far = max(math.hypot(x, y) for x, y in _corners(cx, cy, t))
    lo = max(0, int(near / geom.range_step_m) - 1)
    hi = min(geom.n_range_bins, int(math.ceil(far / geom.range_step_m)) + 1)
    return lo, hi


def render_targets(centres, targets, geom: FrameGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Polar raster with each target painted at its area coverage of every pixel."""
    out = np.zeros((geom.n_azimuth_bins, geom.n_range_bins))
    offs = (np.arange(_SUBSAMPLES) + 0.5) / _SUBSAMPLES - 0.5
    az_deg = (np.arange(geom.n_azimuth_bins)[:, None] + offs[None, :]) * geom.azimuth_step_deg
    sin_az = np.sin(np.radians(az_deg))[:, None, :, None]  # (az, 1, sub_az, 1)
    cos_az = np.cos(np.radians(az_deg))[:, None, :, None]
    for (cx, cy), t in zip(centres, targets):
        lo, hi = _rect_range_window(cx, cy, t, geom)
        rng = ((np.arange(lo, hi)[:, None] + 0.5 + offs[None, :]) * geom.range_step_m)[None, :, None, :]
        x = rng * sin_az
        y = rng * cos_az
        inside = (np.abs(x - cx) <= t.width_m / 2) & (np.abs(y - cy) <= t.height_m / 2)
        cover = inside.mean(axis=(2, 3))
        out[:, lo:hi] = np.maximum(out[:, lo:hi], cover * t.intensity)
    return out


def generate_synthetic_scene(spec: SceneSpec, geom: FrameGeometry = DEFAULT_GEOMETRY):
    """Render ``spec`` into polar frames and exact Cartesian annotations.

    Returns ``(frames, boxes)``. Frame ids start at ``spec.first_frame_id``
    and advance by one per 0.25 s sweep.
    """
    validate(spec, geom)
    rng = np.random.default_rng(np.random.SeedSequence(int(spec.seed) & (2**64 - 1)))
    frames, boxes = [], []
    for k in range(spec.n_frames):
        fid = spec.first_frame_id + k
        centres = [t.center_at(k) for t in spec.targets]
        img = render_targets(centres, spec.targets, geom)
        if spec.blur_sigma_px > 0 and spec.targets:
            img = ndimage.gaussian_filter(img, spec.blur_sigma_px, mode=("wrap", "constant"))
        if spec.noise_level > 0:
            img = img + spec.noise_level * rng.exponential(size=img.shape)
        img = np.clip(img, 0.0, None)
        frames.append(PolarFrame(img.astype(np.float32), fid, k * FRAME_PERIOD_S))
        for (cx, cy), t in zip(centres, spec.targets):
            boxes.append(GroundTruthBox(fid, cx, cy, t.width_m, t.height_m))
    return frames, boxes


def random_targets(n: int, n_frames: int, seed: int, geom: FrameGeometry = DEFAULT_GEOMETRY,
                   large_fraction: float = 0.3, max_speed: float = 20.0) -> tuple[Target, ...]:
    """Draw ``n`` targets whose whole trajectories are valid for ``n_frames``."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(0x7A12,)))
    targets = []
    attempts = 0
    while len(targets) < n:
        attempts += 1
        if attempts > 1000 * max(n, 1):
            raise SceneSpecError("could not place targets inside the disc")
        r = rng.uniform(15.0, 85.0)
        bearing = rng.uniform(0.0, 2 * math.pi)
        speed = rng.uniform(0.0, max_speed)
        heading = rng.uniform(0.0, 2 * math.pi)
        if rng.random() < large_fraction:
            long_side, short_side = rng.uniform(10.0, 14.0), rng.uniform(2.4, 3.0)
        else:
            long_side, short_side = rng.uniform(3.8, 5.0), rng.uniform(1.6, 2.0)
        if rng.random() < 0.5:
            w, h = short_side, long_side
        else:
            w, h = long_side, short_side
        t = Target(r * math.sin(bearing), r * math.cos(bearing), speed * math.sin(heading),
                   speed * math.cos(heading), w, h, float(rng.uniform(150.0, 250.0)))
        try:
            validate(SceneSpec((t,), n_frames), geom)
        except SceneSpecError:
            continue
        targets.append(t)
    return tuple(targets)
