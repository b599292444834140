"""Block compressed sensing with a 2-D DCT sparsity basis.

Each 20x48 block ``x`` is measured as ``y = phi @ x`` with a Gaussian
matrix whose entries are N(0, 1/m). Recovery is basis pursuit in the DCT
coefficient domain::

    minimize ||s||_1  subject to  A s = y,   A = phi @ idct

solved with over-relaxed ADMM. The equality constraint is enforced by an
exact projection built from a QR factorisation of ``A.T``.
"""

from __future__ import annotations

import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from scipy.fft import dctn, idctn
from scipy.linalg import qr, solve_triangular

from .geometry import (
    BLOCK_H,
    BLOCK_SIZE,
    BLOCK_W,
    N_BLOCKS,
    BlockIndex,
    PolarFrame,
    blocks_to_raster,
    raster_to_blocks,
)

if TYPE_CHECKING:
    from .allocation import SamplingPlan

log = logging.getLogger(__name__)


class PlanError(ValueError):
    pass


# ---------------------------------------------------------------------------
# sparsity basis


def dct2(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of length-960 vectors (last axis)."""
    block = np.asarray(block, dtype=np.float64)
    lead = block.shape[:-1]
    coeffs = dctn(block.reshape(*lead, BLOCK_H, BLOCK_W), axes=(-2, -1), norm="ortho")
    return coeffs.reshape(*lead, BLOCK_SIZE)


def idct2(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    lead = coeffs.shape[:-1]
    block = idctn(coeffs.reshape(*lead, BLOCK_H, BLOCK_W), axes=(-2, -1), norm="ortho")
    return block.reshape(*lead, BLOCK_SIZE)


# ---------------------------------------------------------------------------
# measurement matrices


def _block_key(block_idx) -> tuple[int, int]:
    if isinstance(block_idx, BlockIndex):
        return block_idx.az_block, block_idx.range_block
    az, rb = block_idx
    BlockIndex(az, rb)
    return int(az), int(rb)


def block_rng(seed: int, frame_id: int, block_idx) -> np.random.Generator:
    """Generator for one (seed, frame, block) triple.

    Every random draw in sensing comes from here, so any single block can be
    regenerated without replaying the rest of the run.
    """
    az, rb = _block_key(block_idx)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(frame_id), az, rb))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    entries: np.ndarray
    seed: int
    frame_id: int
    block_idx: BlockIndex

    @property
    def m(self) -> int:
        return self.entries.shape[0]


def _gaussian_entries(seed: int, frame_id: int, block_idx, m: int) -> np.ndarray:
    if not 1 <= m <= BLOCK_SIZE:
        raise ValueError(f"measurement count must be in [1, {BLOCK_SIZE}], got {m}")
    rng = block_rng(seed, frame_id, block_idx)
    return rng.standard_normal((m, BLOCK_SIZE)) / np.sqrt(m)


def build_measurement_matrix(seed: int, frame_id: int, block_idx, m: int) -> MeasurementMatrix:
    """Gaussian sensing matrix of shape (m, 960) with N(0, 1/m) entries."""
    entries = _gaussian_entries(seed, frame_id, block_idx, m)
    entries.setflags(write=False)
    az, rb = _block_key(block_idx)
    return MeasurementMatrix(entries, int(seed), int(frame_id), BlockIndex(az, rb))


@dataclass(frozen=True)
class _Projector:
    """Exact projection onto {s : A s = b} for one sensing operator."""

    A: np.ndarray  # (m, n), coefficient-domain operator
    Q: np.ndarray  # (n, m), orthonormal basis of range(A.T)
    R: np.ndarray  # (m, m), A.T = Q R

    def least_norm(self, b: np.ndarray) -> np.ndarray:
        return self.Q @ solve_triangular(self.R, b, trans="T")


@lru_cache(maxsize=32)
def _projector(seed: int, frame_id: int, az: int, rb: int, m: int) -> _Projector:
    phi = _gaussian_entries(seed, frame_id, (az, rb), m)
    # A = phi @ idct, so each row of A is the DCT of the matching row of phi
    A = dct2(phi)
    Q, R = qr(A.T, mode="economic", check_finite=False)
    for arr in (A, Q, R):
        arr.setflags(write=False)
    return _Projector(A, Q, R)


# ---------------------------------------------------------------------------
# single-block sensing and recovery


@dataclass(frozen=True)
class BlockMeasurement:
    y: np.ndarray
    m: int
    seed: int
    frame_id: int
    block_idx: BlockIndex

    def __post_init__(self):
        if not 1 <= self.m <= BLOCK_SIZE:
            raise ValueError(f"m must be in [1, {BLOCK_SIZE}], got {self.m}")
        if np.asarray(self.y).shape != (self.m,):
            raise ValueError(f"expected {self.m} measurements, got shape {np.shape(self.y)}")


def sense_block(block, phi: MeasurementMatrix) -> BlockMeasurement:
    x = np.asarray(block, dtype=np.float64)
    if x.shape != (BLOCK_SIZE,):
        raise ValueError(f"block must have shape ({BLOCK_SIZE},), got {x.shape}")
    return BlockMeasurement(phi.entries @ x, phi.m, phi.seed, phi.frame_id, phi.block_idx)


@dataclass(frozen=True)
class BPSolverConfig:
    max_iterations: int = 2000
    primal_tolerance: float = 1e-5
    dual_tolerance: float = 1e-5
    penalty: float = 1.0
    relaxation: float = 1.5
    check_every: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.primal_tolerance <= 0 or self.dual_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if not 0 < self.relaxation < 2:
            raise ValueError("relaxation must lie in (0, 2)")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")


@dataclass(frozen=True)
class BPResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float


def basis_pursuit(A: np.ndarray, y: np.ndarray, config: BPSolverConfig = BPSolverConfig(),
                  projector: _Projector | None = None) -> BPResult:
    """Solve ``min ||s||_1 s.t. A s = y`` by ADMM.

    The problem is rescaled so the measurements have unit RMS before the
    penalty is applied; the solution is scaled back afterwards. ``residual``
    is ``||A s - y|| / ||y||`` for the returned ``s``.

    On non-convergence the last projected iterate is returned. It satisfies
    the constraint to rounding error, which keeps a half-solved block usable.
    """
    y = np.asarray(y, dtype=np.float64)
    m, n = A.shape
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        return BPResult(np.zeros(n), True, 0, 0.0)
    if projector is None:
        Q, R = qr(A.T, mode="economic", check_finite=False)
        projector = _Projector(A, Q, R)
    Q = projector.Q
    scale = ynorm / np.sqrt(m)
    yn = y / scale

    rho = config.penalty
    alpha = config.relaxation
    thresh = 1.0 / rho
    x_ls = projector.least_norm(yn)
    z = np.zeros(n)
    u = np.zeros(n)
    x = x_ls
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        v = z - u
        x = v - Q @ (Q.T @ v) + x_ls
        xh = alpha * x + (1.0 - alpha) * z
        w = xh + u
        z_old = z
        z = w - np.clip(w, -thresh, thresh)
        u = w - z
        if it % config.check_every == 0 or it == config.max_iterations:
            r_primal = np.linalg.norm(A @ z - yn) / np.sqrt(m)
            r_dual = rho * np.linalg.norm(z - z_old) / max(rho * np.linalg.norm(u), 1e-300)
            if r_primal <= config.primal_tolerance and r_dual <= config.dual_tolerance:
                converged = True
                break
    s = z if converged else x
    residual = float(np.linalg.norm(A @ s - yn) / np.sqrt(m))
    return BPResult(s * scale, converged, it, residual)


def reconstruct_block(meas: BlockMeasurement, config: BPSolverConfig = BPSolverConfig()) -> BPResult:
    """Recover a block from its measurements; ``result.x`` is in the pixel domain."""
    az, rb = meas.block_idx.az_block, meas.block_idx.range_block
    y = np.asarray(meas.y, dtype=np.float64)
    if not np.any(y):
        return BPResult(np.zeros(BLOCK_SIZE), True, 0, 0.0)
    proj = _projector(int(meas.seed), int(meas.frame_id), az, rb, int(meas.m))
    res = basis_pursuit(proj.A, y, config, proj)
    return BPResult(idct2(res.x), res.converged, res.iterations, res.residual)


# ---------------------------------------------------------------------------
# whole frames


def worker_count() -> int:
    """Worker threads for per-block work; ``RADCS_THREADS`` caps it (0 = auto)."""
    raw = os.environ.get("RADCS_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def _map_blocks(fn, items, workers: int | None):
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class FrameMeasurements:
    """All stored values for one frame.

    ``values[b]`` holds block ``b``'s measurements (or its raw pixels when
    ``m_per_block[b] == 960``), as float32, the stored precision.
    """

    frame_id: int
    seed: int
    m_per_block: np.ndarray
    values: tuple

    def __post_init__(self):
        counts = np.asarray(self.m_per_block, dtype=np.int64)
        if counts.shape != (N_BLOCKS,):
            raise PlanError(f"expected {N_BLOCKS} block counts, got {counts.shape}")
        if len(self.values) != N_BLOCKS:
            raise PlanError(f"expected {N_BLOCKS} value arrays, got {len(self.values)}")
        for b, (m, v) in enumerate(zip(counts, self.values)):
            if np.shape(v) != (m,):
                raise PlanError(f"block {b}: {np.shape(v)} values for m={m}")
        object.__setattr__(self, "m_per_block", counts)

    @property
    def total_values(self) -> int:
        return int(self.m_per_block.sum())

    def __eq__(self, other):
        if not isinstance(other, FrameMeasurements):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.seed == other.seed
            and np.array_equal(self.m_per_block, other.m_per_block)
            and all(np.array_equal(a, b) for a, b in zip(self.values, other.values))
        )

    __hash__ = None

    def block_measurement(self, flat: int) -> BlockMeasurement:
        m = int(self.m_per_block[flat])
        return BlockMeasurement(
            np.asarray(self.values[flat], dtype=np.float64), m, self.seed, self.frame_id,
            BlockIndex.from_flat(flat),
        )


def sense_frame(frame: PolarFrame, plan: "SamplingPlan", seed: int) -> FrameMeasurements:
    """Measure every block of ``frame`` with the counts in ``plan``.

    Blocks with ``m == 960`` are stored as raw pixels rather than sensed.
    """
    counts = np.asarray(plan.m_per_block, dtype=np.int64)
    if counts.shape != (N_BLOCKS,):
        raise PlanError(f"plan covers {counts.size} blocks, frame has {N_BLOCKS}")
    if counts.min() < 1 or counts.max() > BLOCK_SIZE:
        raise PlanError("plan block counts must lie in [1, 960]")
    blocks = raster_to_blocks(frame.data)
    values = []
    for flat in range(N_BLOCKS):
        m = int(counts[flat])
        x = blocks[flat]
        if m == BLOCK_SIZE:
            values.append(x.astype(np.float32))
            continue
        if not np.any(x):
            # phi @ 0 == 0 for every phi; skip drawing it
            values.append(np.zeros(m, dtype=np.float32))
            continue
        phi = _gaussian_entries(seed, frame.frame_id, BlockIndex.from_flat(flat), m)
        values.append((phi @ x.astype(np.float64)).astype(np.float32))
    return FrameMeasurements(frame.frame_id, int(seed), counts, tuple(values))


@dataclass
class ReconstructionReport:
    frame_id: int
    converged: np.ndarray = field(default_factory=lambda: np.ones(N_BLOCKS, dtype=bool))
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(N_BLOCKS, dtype=np.int64))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(N_BLOCKS))

    @property
    def n_unconverged(self) -> int:
        return int((~self.converged).sum())

    @property
    def cs_blocks(self) -> int:
        return int((self.iterations > 0).sum())


def reconstruct_frame(meas: FrameMeasurements, config: BPSolverConfig = BPSolverConfig(),
                      workers: int | None = None) -> tuple[PolarFrame, ReconstructionReport]:
    """Rebuild a polar frame from its measurements.

    Raw blocks are copied exactly; the rest go through basis pursuit. Block
    solves are independent and may run on a thread pool, results are
    assembled by block index so the output does not depend on scheduling.
    """
    report = ReconstructionReport(meas.frame_id)
    out = np.zeros((N_BLOCKS, BLOCK_SIZE), dtype=np.float64)

    def solve(flat: int):
        m = int(meas.m_per_block[flat])
        if m == BLOCK_SIZE:
            return flat, np.asarray(meas.values[flat], dtype=np.float64), None
        return flat, None, reconstruct_block(meas.block_measurement(flat), config)

    for flat, raw, res in _map_blocks(solve, range(N_BLOCKS), workers):
        if res is None:
            out[flat] = raw
            continue
        out[flat] = res.x
        report.converged[flat] = res.converged
        report.iterations[flat] = res.iterations
        report.residuals[flat] = res.residual
    if report.n_unconverged:
        log.debug("frame %d: %d/%d blocks hit the iteration cap", meas.frame_id,
                  report.n_unconverged, N_BLOCKS)
    # reconstructions may dip below zero; intensities are non-negative
    raster = np.clip(blocks_to_raster(out), 0.0, None).astype(np.float32)
    return PolarFrame(raster, meas.frame_id), report


# ---------------------------------------------------------------------------
# .rmeas files

_RMEAS_MAGIC = b"RMEAS1\x00\x00"
_RMEAS_HEADER = struct.Struct("<8sqQ")


def write_rmeas(path, meas: FrameMeasurements) -> None:
    """Header (magic, frame_id, seed, 240 uint16 counts) then float32 values."""
    with open(path, "wb") as fh:
        fh.write(_RMEAS_HEADER.pack(_RMEAS_MAGIC, int(meas.frame_id), int(meas.seed) & (2**64 - 1)))
        fh.write(meas.m_per_block.astype("<u2").tobytes())
        for v in meas.values:
            fh.write(np.asarray(v, dtype="<f4").tobytes())


def read_rmeas(path) -> FrameMeasurements:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, frame_id, seed = _RMEAS_HEADER.unpack_from(buf, 0)
    if magic != _RMEAS_MAGIC:
        raise ValueError(f"{path}: not an .rmeas file")
    off = _RMEAS_HEADER.size
    counts = np.frombuffer(buf, dtype="<u2", count=N_BLOCKS, offset=off).astype(np.int64)
    off += 2 * N_BLOCKS
    flat = np.frombuffer(buf, dtype="<f4", offset=off).astype(np.float32)
    if flat.size != counts.sum():
        raise ValueError(f"{path}: expected {counts.sum()} values, found {flat.size}")
    splits = np.cumsum(counts)[:-1]
    values = tuple(np.array(v) for v in np.split(flat, splits))
    return FrameMeasurements(frame_id, seed, counts, values)
