"""Polar radar raster geometry.

Azimuth convention: azimuth bin 0 points straight ahead of the vehicle
(Cartesian +y) and bearings increase clockwise, so a bearing of 90 deg is
the +x axis. Range bin ``j`` covers ``[j, j + 1) * range_step_m``.

Blocks are indexed ``(az_block, range_block)`` on a 20 x 12 grid. Where a
flat block ordering is needed (plans, serialized counts) the order is
row-major over that grid: ``flat = az_block * 12 + range_block``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

N_AZIMUTH = 400
N_RANGE = 576
MAX_RANGE_M = 100.0
BLOCK_H = 20
BLOCK_W = 48
N_AZ_BLOCKS = N_AZIMUTH // BLOCK_H
N_RANGE_BLOCKS = N_RANGE // BLOCK_W
N_BLOCKS = N_AZ_BLOCKS * N_RANGE_BLOCKS
BLOCK_SIZE = BLOCK_H * BLOCK_W
FRAME_PERIOD_S = 0.25


class GeometryError(ValueError):
    """Raised for points or indices that fall outside the radar grid."""


@dataclass(frozen=True)
class FrameGeometry:
    n_azimuth_bins: int = N_AZIMUTH
    n_range_bins: int = N_RANGE
    max_range_m: float = MAX_RANGE_M

    @property
    def azimuth_step_deg(self) -> float:
        return 360.0 / self.n_azimuth_bins

    @property
    def range_step_m(self) -> float:
        return self.max_range_m / self.n_range_bins

    @property
    def block_range_m(self) -> float:
        return BLOCK_W * self.range_step_m

    @property
    def block_azimuth_deg(self) -> float:
        return BLOCK_H * self.azimuth_step_deg


DEFAULT_GEOMETRY = FrameGeometry()


@dataclass(frozen=True, order=True)
class BlockIndex:
    az_block: int
    range_block: int

    def __post_init__(self):
        if not (0 <= self.az_block < N_AZ_BLOCKS and 0 <= self.range_block < N_RANGE_BLOCKS):
            raise GeometryError(
                f"block index ({self.az_block}, {self.range_block}) outside "
                f"{N_AZ_BLOCKS}x{N_RANGE_BLOCKS} grid"
            )

    @property
    def flat(self) -> int:
        return self.az_block * N_RANGE_BLOCKS + self.range_block

    @classmethod
    def from_flat(cls, flat: int) -> "BlockIndex":
        return cls(*divmod(int(flat), N_RANGE_BLOCKS))


def all_blocks() -> Iterator[BlockIndex]:
    """All 240 block indices in flat (row-major) order."""
    for flat in range(N_BLOCKS):
        yield BlockIndex.from_flat(flat)


def _check_raster(data: np.ndarray) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.shape != (N_AZIMUTH, N_RANGE):
        raise ValueError(f"polar frame must be {N_AZIMUTH}x{N_RANGE}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("polar frame contains non-finite values")
    if np.any(arr < 0):
        raise ValueError("polar frame contains negative intensities")
    return arr


@dataclass(frozen=True, eq=False)
class PolarFrame:
    """One radar sweep as a 400x576 azimuth-major intensity raster.

    Intensities are held as float32, the precision of the on-disk format, so
    a frame written and re-read compares equal.
    """

    data: np.ndarray
    frame_id: int = 0
    timestamp_s: float | None = None

    def __post_init__(self):
        arr = _check_raster(self.data)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.timestamp_s is None:
            object.__setattr__(self, "timestamp_s", self.frame_id * FRAME_PERIOD_S)

    def __eq__(self, other):
        if not isinstance(other, PolarFrame):
            return NotImplemented
        return self.frame_id == other.frame_id and np.array_equal(self.data, other.data)

    __hash__ = None

    @classmethod
    def zeros(cls, frame_id: int = 0) -> "PolarFrame":
        return cls(np.zeros((N_AZIMUTH, N_RANGE), dtype=np.float32), frame_id)


@dataclass(frozen=True, eq=False)
class CartesianFrame:
    data: np.ndarray
    meters_per_pixel: float
    frame_id: int = 0

    @property
    def side(self) -> int:
        return self.data.shape[0]

    def pixel_to_xy(self, row: float, col: float) -> tuple[float, float]:
        """Cartesian meters of a (possibly fractional) pixel centre."""
        half = self.side / 2
        x = (col + 0.5 - half) * self.meters_per_pixel
        y = (half - row - 0.5) * self.meters_per_pixel
        return x, y

    def xy_to_pixel(self, x_m: float, y_m: float) -> tuple[float, float]:
        half = self.side / 2
        col = x_m / self.meters_per_pixel + half - 0.5
        row = half - y_m / self.meters_per_pixel - 0.5
        return row, col


def _block_slices(idx: BlockIndex) -> tuple[slice, slice]:
    r0 = idx.az_block * BLOCK_H
    c0 = idx.range_block * BLOCK_W
    return slice(r0, r0 + BLOCK_H), slice(c0, c0 + BLOCK_W)


def extract_block(frame: PolarFrame, idx: BlockIndex) -> np.ndarray:
    """Return block ``idx`` as a length-960 vector, row-major within the block."""
    if not isinstance(idx, BlockIndex):
        idx = BlockIndex(*idx)
    rows, cols = _block_slices(idx)
    return frame.data[rows, cols].reshape(BLOCK_SIZE).copy()


def insert_block(frame: PolarFrame, idx: BlockIndex, block) -> PolarFrame:
    """Return a new frame with block ``idx`` replaced by ``block``."""
    if not isinstance(idx, BlockIndex):
        idx = BlockIndex(*idx)
    block = np.asarray(block)
    if block.size != BLOCK_SIZE or block.ndim != 1:
        raise ValueError(f"block must be a length-{BLOCK_SIZE} vector, got shape {block.shape}")
    data = frame.data.copy()
    rows, cols = _block_slices(idx)
    data[rows, cols] = block.reshape(BLOCK_H, BLOCK_W)
    return PolarFrame(data, frame.frame_id, frame.timestamp_s)


def blocks_to_raster(blocks: np.ndarray) -> np.ndarray:
    """Assemble a (240, 960) stack in flat block order into a 400x576 raster."""
    stacked = np.asarray(blocks).reshape(N_AZ_BLOCKS, N_RANGE_BLOCKS, BLOCK_H, BLOCK_W)
    return stacked.transpose(0, 2, 1, 3).reshape(N_AZIMUTH, N_RANGE)


def raster_to_blocks(data: np.ndarray) -> np.ndarray:
    """Inverse of :func:`blocks_to_raster`."""
    tiles = np.asarray(data).reshape(N_AZ_BLOCKS, BLOCK_H, N_RANGE_BLOCKS, BLOCK_W)
    return tiles.transpose(0, 2, 1, 3).reshape(N_BLOCKS, BLOCK_SIZE)


@lru_cache(maxsize=4)
def _cartesian_lookup(geom: FrameGeometry, side: int):
    mpp = geom.range_step_m
    half = side / 2
    centres = (np.arange(side) + 0.5 - half) * mpp
    x = centres[None, :]
    y = -centres[:, None]
    rng = np.hypot(x, y)
    bearing = np.degrees(np.arctan2(x, y)) % 360.0
    inside = rng < geom.max_range_m
    az_bin = np.rint(bearing / geom.azimuth_step_deg).astype(np.int64) % geom.n_azimuth_bins
    range_bin = np.minimum(np.floor(rng / geom.range_step_m).astype(np.int64), geom.n_range_bins - 1)
    az_bin = np.where(inside, az_bin, 0)
    range_bin = np.where(inside, range_bin, 0)
    for arr in (az_bin, range_bin, inside):
        arr.setflags(write=False)
    return az_bin, range_bin, inside


def polar_to_cartesian(frame: PolarFrame, geom: FrameGeometry = DEFAULT_GEOMETRY) -> CartesianFrame:
    """Nearest-neighbour scan conversion to a bird's-eye raster.

    The output is ``2 * n_range_bins`` pixels square at the polar range
    resolution with the vehicle at the centre; pixels outside the range disc
    are zero.
    """
    side = 2 * geom.n_range_bins
    az_bin, range_bin, inside = _cartesian_lookup(geom, side)
    out = np.where(inside, frame.data[az_bin, range_bin], np.float32(0))
    return CartesianFrame(out.astype(np.float32), geom.range_step_m, frame.frame_id)


def xy_to_polar(x_m: float, y_m: float) -> tuple[float, float]:
    """(range_m, bearing_deg) with bearing clockwise from +y in [0, 360)."""
    bearing = math.degrees(math.atan2(x_m, y_m)) % 360.0
    return math.hypot(x_m, y_m), bearing


def polar_to_xy(range_m: float, bearing_deg: float) -> tuple[float, float]:
    theta = math.radians(bearing_deg)
    return range_m * math.sin(theta), range_m * math.cos(theta)


def cartesian_point_to_block(x_m: float, y_m: float, geom: FrameGeometry = DEFAULT_GEOMETRY) -> BlockIndex:
    """Block containing a Cartesian point.

    Raises:
        GeometryError: the point is the origin or lies beyond the maximum
            range. A point exactly at the maximum range maps to the last
            range block.
    """
    range_m, bearing = xy_to_polar(x_m, y_m)
    if range_m == 0.0:
        raise GeometryError("point at the radar origin has no defined azimuth")
    if range_m > geom.max_range_m:
        raise GeometryError(f"point at {range_m:.3f} m is beyond the {geom.max_range_m} m range")
    az_block = min(int(bearing // geom.block_azimuth_deg), N_AZ_BLOCKS - 1)
    range_block = min(int(range_m // geom.block_range_m), N_RANGE_BLOCKS - 1)
    return BlockIndex(az_block, range_block)


def polar_pixel_centres(geom: FrameGeometry = DEFAULT_GEOMETRY) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian (x, y) of every polar pixel centre, each shaped 400x576."""
    return _polar_centres(geom)


@lru_cache(maxsize=4)
def _polar_centres(geom: FrameGeometry):
    bearing = np.radians(np.arange(geom.n_azimuth_bins) * geom.azimuth_step_deg)[:, None]
    rng = ((np.arange(geom.n_range_bins) + 0.5) * geom.range_step_m)[None, :]
    x = rng * np.sin(bearing)
    y = rng * np.cos(bearing)
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y
