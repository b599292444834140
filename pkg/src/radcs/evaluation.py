"""Reconstruction and detection metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import DEFAULT_GEOMETRY, FrameGeometry, PolarFrame, polar_pixel_centres

AP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


def box_corners(box) -> tuple[float, float, float, float]:
    """(x_min, y_min, x_max, y_max) of anything with centre and extent fields."""
    hw = box.width_m / 2
    hh = box.height_m / 2
    return box.center_x_m - hw, box.center_y_m - hh, box.center_x_m + hw, box.center_y_m + hh


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = box_corners(a)
    bx0, by0, bx1, by1 = box_corners(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.width_m * a.height_m + b.width_m * b.height_m - inter
    return min(1.0, inter / union)


def _match_frame(dets: Sequence, truth: Sequence, threshold: float) -> list[tuple[float, bool]]:
    # greedy in descending score; stable sort keeps input order for ties
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(truth)
    out = []
    for i in order:
        best, best_j = threshold, -1
        for j, t in enumerate(truth):
            if taken[j]:
                continue
            v = iou(dets[i], t)
            if v >= best:
                if best_j < 0 or v > best:
                    best, best_j = v, j
        if best_j >= 0:
            taken[best_j] = True
        out.append((dets[i].score, best_j >= 0))
    return out


def pooled_average_precision(frames: Iterable[tuple[Sequence, Sequence]], iou_threshold: float = 0.5) -> float:
    """AP over several frames; detections only match truth from their own frame."""
    scored: list[tuple[float, int, bool]] = []
    n_truth = 0
    for k, (dets, truth) in enumerate(frames):
        n_truth += len(truth)
        for rank, (score, tp) in enumerate(_match_frame(dets, truth, iou_threshold)):
            scored.append((score, k * 1_000_000 + rank, tp))
    if n_truth == 0:
        return 1.0 if not scored else 0.0
    if not scored:
        return 0.0
    scored.sort(key=lambda s: (-s[0], s[1]))
    tp = np.cumsum([s[2] for s in scored], dtype=np.float64)
    fp = np.cumsum([not s[2] for s in scored], dtype=np.float64)
    recall = tp / n_truth
    precision = tp / (tp + fp)
    # all-points interpolation: precision envelope integrated over recall steps
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([[0.0], precision])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(dets: Sequence, truth: Sequence, iou_threshold: float = 0.5) -> float:
    """Single-frame AP with greedy matching and all-points interpolation.

    Empty truth scores 1.0 when there are no detections and 0.0 otherwise.
    """
    return pooled_average_precision([(dets, truth)], iou_threshold)


def mean_ap(frames, thresholds: Sequence[float] = AP_THRESHOLDS) -> float:
    frames = list(frames)
    return float(np.mean([pooled_average_precision(frames, t) for t in thresholds]))


@dataclass(frozen=True)
class MetricBundle:
    nmse: float
    psnr_db: float
    ap50: float
    ap: float
    n_detections: int = 0
    n_truth: int = 0
    nmse_defined: bool = True
    box_nmse: float = math.nan


def nmse(original: np.ndarray, reconstruction: np.ndarray) -> float:
    x = np.asarray(original, dtype=np.float64)
    e = np.asarray(reconstruction, dtype=np.float64) - x
    denom = float(np.vdot(x, x))
    if denom == 0.0:
        return math.nan
    return float(np.vdot(e, e)) / denom


def psnr_db(original: np.ndarray, reconstruction: np.ndarray) -> float:
    x = np.asarray(original, dtype=np.float64)
    mse = float(np.mean((np.asarray(reconstruction, dtype=np.float64) - x) ** 2))
    peak = float(x.max()) if x.size else 0.0
    if mse == 0.0:
        return math.inf
    if peak == 0.0:
        return math.nan
    return 10.0 * math.log10(peak * peak / mse)


def truth_pixel_mask(truth: Sequence, geom: FrameGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Polar pixels whose centres fall inside any of the given boxes."""
    x, y = polar_pixel_centres(geom)
    mask = np.zeros(x.shape, dtype=bool)
    for t in truth:
        x0, y0, x1, y1 = box_corners(t)
        mask |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    return mask


def box_nmse(original: PolarFrame, reconstruction: PolarFrame, truth: Sequence,
             geom: FrameGeometry = DEFAULT_GEOMETRY) -> float:
    """Reconstruction error restricted to annotated objects, normalised by their energy."""
    mask = truth_pixel_mask(truth, geom)
    if not mask.any():
        return math.nan
    return nmse(original.data[mask], reconstruction.data[mask])


def frame_metrics(original: PolarFrame, reconstruction: PolarFrame, dets: Sequence, truth: Sequence,
                  geom: FrameGeometry = DEFAULT_GEOMETRY) -> MetricBundle:
    err = nmse(original.data, reconstruction.data)
    return MetricBundle(
        nmse=err,
        psnr_db=psnr_db(original.data, reconstruction.data),
        ap50=average_precision(dets, truth, 0.5),
        ap=mean_ap([(dets, truth)]),
        n_detections=len(dets),
        n_truth=len(truth),
        nmse_defined=not math.isnan(err),
        box_nmse=box_nmse(original, reconstruction, truth, geom) if truth else math.nan,
    )


@dataclass(frozen=True)
class FrameSummary:
    """What one frame contributes to a scene-level metrics row."""

    frame_id: int
    metrics: MetricBundle
    detections: Sequence
    truth: Sequence
    plan_total_m: int
    n_unconverged: int = 0


METRIC_COLUMNS = ("frame_id", "nmse", "psnr_db", "ap50", "ap", "n_detections", "n_truth",
                  "plan_total_m", "box_nmse", "n_unconverged")


def frame_row(s: FrameSummary) -> dict:
    m = s.metrics
    return {"frame_id": s.frame_id, "nmse": m.nmse, "psnr_db": m.psnr_db, "ap50": m.ap50, "ap": m.ap,
            "n_detections": m.n_detections, "n_truth": m.n_truth, "plan_total_m": s.plan_total_m,
            "box_nmse": m.box_nmse, "n_unconverged": s.n_unconverged}


def scene_row(summaries: Sequence[FrameSummary]) -> dict:
    """Aggregate row: mean NMSE/PSNR over defined frames, AP pooled over all frames."""
    nmses = [s.metrics.nmse for s in summaries if s.metrics.nmse_defined]
    psnrs = [s.metrics.psnr_db for s in summaries if math.isfinite(s.metrics.psnr_db)]
    boxes = [s.metrics.box_nmse for s in summaries if not math.isnan(s.metrics.box_nmse)]
    pairs = [(s.detections, s.truth) for s in summaries]
    return {
        "frame_id": "scene",
        "nmse": float(np.mean(nmses)) if nmses else math.nan,
        "psnr_db": float(np.mean(psnrs)) if psnrs else math.nan,
        "ap50": pooled_average_precision(pairs, 0.5),
        "ap": mean_ap(pairs),
        "n_detections": sum(len(s.detections) for s in summaries),
        "n_truth": sum(len(s.truth) for s in summaries),
        "plan_total_m": sum(s.plan_total_m for s in summaries),
        "box_nmse": float(np.mean(boxes)) if boxes else math.nan,
        "n_unconverged": sum(s.n_unconverged for s in summaries),
    }
