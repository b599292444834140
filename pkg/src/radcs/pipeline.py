"""Closed acquisition loop over a scene.

Frame 1 is stored raw. Every later frame is planned from detections on the
previous stored frame, sensed block-wise, reconstructed, and handed to the
detector in turn. The loop is sequential across frames by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .allocation import SamplingPlan, allocate, full_plan, uniform_plan
from .detector import GroundTruthBox, OracleBackend, detect
from .evaluation import FrameSummary, MetricBundle, frame_metrics, scene_row
from .geometry import DEFAULT_GEOMETRY, FrameGeometry, PolarFrame, polar_to_cartesian
from .importance import ImportanceMask, MaskConfig, PatternVariant, build_mask
from .sensing import BPSolverConfig, FrameMeasurements, ReconstructionReport, reconstruct_frame, sense_frame

log = logging.getLogger(__name__)

STANDARD_CS = "standard"
VARIANTS = (STANDARD_CS, PatternVariant.RADINFO1.value, PatternVariant.RADINFO2.value)


@dataclass(frozen=True)
class SceneConfig:
    sampling_rate: float = 0.20
    variant: str = PatternVariant.RADINFO2.value
    backend: object = field(default_factory=OracleBackend)
    seed: int = 0
    n_frames: int | None = 20
    solver: BPSolverConfig = field(default_factory=BPSolverConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    plan_from_original: bool = False
    resync_every: int = 0
    workers: int | None = None

    def __post_init__(self):
        variant = self.variant.value if isinstance(self.variant, PatternVariant) else str(self.variant)
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        object.__setattr__(self, "variant", variant)
        if self.n_frames is not None and self.n_frames < 1:
            raise ValueError("n_frames must be at least 1")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling_rate must lie in (0, 1]")
        if self.resync_every < 0:
            raise ValueError("resync_every must be >= 0")

    @property
    def pattern_variant(self) -> PatternVariant | None:
        return None if self.variant == STANDARD_CS else PatternVariant(self.variant)


@dataclass
class FrameRecord:
    frame_id: int
    plan: SamplingPlan
    measurements: FrameMeasurements
    reconstruction: PolarFrame
    detections: list
    mask_used: ImportanceMask
    metrics: MetricBundle
    convergence: ReconstructionReport
    detector_failed: bool = False
    missing_annotations: bool = False


@dataclass
class SceneRun:
    config: SceneConfig
    records: list[FrameRecord]
    aggregate: dict = field(default_factory=dict)

    def nmse_series(self) -> np.ndarray:
        return np.array([r.metrics.nmse for r in self.records])

    def box_nmse_series(self) -> np.ndarray:
        return np.array([r.metrics.box_nmse for r in self.records])


def truth_by_frame(boxes) -> dict[int, list[GroundTruthBox]]:
    out: dict[int, list] = {}
    for b in boxes or ():
        out.setdefault(b.frame_id, []).append(b)
    return out


def _run_detector(frame: PolarFrame, backend, geom: FrameGeometry):
    try:
        res = detect(polar_to_cartesian(frame, geom), backend)
    except Exception:  # a broken detector must not stop the acquisition loop
        log.exception("detector failed on frame %d", frame.frame_id)
        return [], True, False
    return res.detections, False, res.missing_annotations


def summaries(records: Sequence[FrameRecord], truth: dict[int, list]) -> list[FrameSummary]:
    return [FrameSummary(r.frame_id, r.metrics, r.detections, truth.get(r.frame_id, []), r.plan.total_m,
                         r.convergence.n_unconverged) for r in records]


def run_scene(frames: Sequence[PolarFrame], truth: Sequence[GroundTruthBox] | None, config: SceneConfig,
              geom: FrameGeometry = DEFAULT_GEOMETRY) -> SceneRun:
    """Run the acquisition loop over ``frames`` (at most ``config.n_frames``).

    ``truth`` feeds the metrics; the oracle backend carries its own copy.
    """
    if not frames:
        raise ValueError("run_scene needs at least one frame")
    frames = list(frames)[: config.n_frames] if config.n_frames else list(frames)
    truth_map = truth_by_frame(truth)
    variant = config.pattern_variant
    records: list[FrameRecord] = []
    prev_dets: list = []
    prev_original: PolarFrame | None = None

    for k, frame in enumerate(frames):
        raw = k == 0 or (config.resync_every and k % config.resync_every == 0)
        if raw:
            plan = full_plan()
            mask = ImportanceMask(frozenset(), (), variant)
        elif variant is None:
            plan = uniform_plan(config.sampling_rate)
            mask = ImportanceMask(frozenset(), (), None)
        else:
            if config.plan_from_original:
                plan_dets, _, _ = _run_detector(prev_original, config.backend, geom)
            else:
                plan_dets = prev_dets
            mask = build_mask(plan_dets, variant, config.mask, geom)
            plan = allocate(mask.important, config.sampling_rate, strict=False)

        meas = sense_frame(frame, plan, config.seed)
        stored, conv = reconstruct_frame(meas, config.solver, config.workers)
        dets, failed, missing = _run_detector(stored, config.backend, geom)
        metrics = frame_metrics(frame, stored, dets, truth_map.get(frame.frame_id, []), geom)
        records.append(FrameRecord(frame.frame_id, plan, meas, stored, dets, mask, metrics, conv, failed, missing))
        log.info("frame %d: m=%d nmse=%.4g important=%d unconverged=%d", frame.frame_id, plan.total_m,
                 metrics.nmse, len(mask), conv.n_unconverged)
        prev_dets = dets
        prev_original = frame

    return SceneRun(config, records, scene_row(summaries(records, truth_map)))
