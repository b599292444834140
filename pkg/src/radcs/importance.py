"""Detections to important polar blocks for the next frame.

Azimuth neighbours wrap around (block 19 borders block 0); range
neighbours outside the grid are dropped.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    DEFAULT_GEOMETRY,
    N_AZ_BLOCKS,
    N_BLOCKS,
    N_RANGE_BLOCKS,
    BlockIndex,
    FrameGeometry,
    GeometryError,
    cartesian_point_to_block,
)

log = logging.getLogger(__name__)

LARGE_OBJECT_M = 6.0
FAR_RANGE_M = 50.0
NEAR_AV_RANGE_M = 16.0
NEAR_AV_SPAN = 3


class SizeClass(enum.Enum):
    SMALL = "small"
    LARGE = "large"


class PatternVariant(enum.Enum):
    RADINFO1 = "radinfo1"
    RADINFO2 = "radinfo2"


@dataclass(frozen=True)
class Detection:
    center_x_m: float
    center_y_m: float
    width_m: float
    height_m: float
    score: float = 1.0
    size_class: SizeClass | None = None
    label: str = "vehicle"

    def __post_init__(self):
        if not (self.width_m > 0 and self.height_m > 0):
            raise ValueError("detection extents must be positive")
        if math.hypot(self.center_x_m, self.center_y_m) > DEFAULT_GEOMETRY.max_range_m:
            raise ValueError("detection centre lies outside the radar disc")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")
        if self.size_class is None:
            object.__setattr__(self, "size_class", classify_size(self))

    @property
    def range_m(self) -> float:
        return math.hypot(self.center_x_m, self.center_y_m)


def classify_size(det) -> SizeClass:
    """Large when the longer box side is at least 6 m."""
    return SizeClass.LARGE if max(det.width_m, det.height_m) >= LARGE_OBJECT_M else SizeClass.SMALL


def _neighbourhood(center: BlockIndex, rows: dict[int, int]) -> frozenset[BlockIndex]:
    # rows maps range offset -> azimuth half-width
    out = set()
    for dr, half in rows.items():
        r = center.range_block + dr
        if not 0 <= r < N_RANGE_BLOCKS:
            continue
        for da in range(-half, half + 1):
            out.add(BlockIndex((center.az_block + da) % N_AZ_BLOCKS, r))
    return frozenset(out)


def pattern_3x3(center: BlockIndex) -> frozenset[BlockIndex]:
    return _neighbourhood(center, {-1: 1, 0: 1, 1: 1})


def pattern_5x5(center: BlockIndex) -> frozenset[BlockIndex]:
    return _neighbourhood(center, {-2: 2, -1: 2, 0: 2, 1: 2, 2: 2})


def pattern_T(center: BlockIndex) -> frozenset[BlockIndex]:
    """Three blocks wide at the object's range and one ring nearer, five wide one ring farther."""
    return _neighbourhood(center, {-1: 1, 0: 1, 1: 2})


def near_av_augment(center: BlockIndex, range_m: float) -> frozenset[BlockIndex]:
    """Three blocks either side in azimuth for objects closer than 16 m."""
    if not range_m < NEAR_AV_RANGE_M:
        return frozenset()
    return frozenset(
        BlockIndex((center.az_block + d) % N_AZ_BLOCKS, center.range_block)
        for d in range(-NEAR_AV_SPAN, NEAR_AV_SPAN + 1)
        if d != 0
    )


@dataclass(frozen=True)
class MaskConfig:
    """Knobs for :func:`build_mask`.

    ``near_av`` defaults to on for RadInfo2 and off for RadInfo1.
    ``radinfo2_large_near`` selects the pattern RadInfo2 uses for large
    objects inside 50 m ("5x5" or "3x3").
    """

    near_av: bool | None = None
    radinfo2_large_near: str = "5x5"
    score_threshold: float = 0.5

    def __post_init__(self):
        if self.radinfo2_large_near not in ("5x5", "3x3"):
            raise ValueError("radinfo2_large_near must be '5x5' or '3x3'")

    def near_av_for(self, variant: PatternVariant) -> bool:
        if self.near_av is None:
            return variant is PatternVariant.RADINFO2
        return self.near_av


@dataclass(frozen=True)
class ImportanceMask:
    important: frozenset
    source_detections: tuple = ()
    variant: PatternVariant | None = None

    def __len__(self):
        return len(self.important)

    def bitmap(self) -> np.ndarray:
        bits = np.zeros(N_BLOCKS, dtype=bool)
        for b in self.important:
            bits[b.flat] = True
        return bits

    def packed(self) -> bytes:
        """The 240-bit bitmap, flat block order, most significant bit first."""
        return np.packbits(self.bitmap()).tobytes()

    def csv_rows(self):
        bits = self.bitmap()
        for flat in range(N_BLOCKS):
            b = BlockIndex.from_flat(flat)
            yield b.az_block, b.range_block, int(bits[flat])


def detection_blocks(det: Detection, variant: PatternVariant, config: MaskConfig = MaskConfig(),
                     geom: FrameGeometry = DEFAULT_GEOMETRY) -> frozenset[BlockIndex]:
    center = cartesian_point_to_block(det.center_x_m, det.center_y_m, geom)
    size = det.size_class or classify_size(det)
    rng = det.range_m
    if variant is PatternVariant.RADINFO1:
        blocks = pattern_5x5(center) if size is SizeClass.LARGE else pattern_3x3(center)
    elif rng >= FAR_RANGE_M:
        blocks = pattern_T(center)
    elif size is SizeClass.LARGE and config.radinfo2_large_near == "5x5":
        blocks = pattern_5x5(center)
    else:
        blocks = pattern_3x3(center)
    if config.near_av_for(variant):
        blocks = blocks | near_av_augment(center, rng)
    return blocks


def build_mask(dets, variant: PatternVariant, config: MaskConfig = MaskConfig(),
               geom: FrameGeometry = DEFAULT_GEOMETRY) -> ImportanceMask:
    """Union of the per-detection patterns for detections above the score threshold."""
    variant = PatternVariant(variant)
    important: set[BlockIndex] = set()
    used = []
    for det in dets:
        if det.score < config.score_threshold:
            continue
        try:
            important |= detection_blocks(det, variant, config, geom)
        except GeometryError as exc:
            log.warning("skipping detection %s: %s", det, exc)
            continue
        used.append(det)
    return ImportanceMask(frozenset(important), tuple(used), variant)
