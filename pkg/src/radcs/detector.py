"""Stand-in object detectors operating on bird's-eye Cartesian frames.

Two backends: an oracle that replays annotations and a threshold/blob
detector that needs no trained model.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .geometry import DEFAULT_GEOMETRY, CartesianFrame
from .importance import Detection

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthBox:
    frame_id: int
    center_x_m: float
    center_y_m: float
    width_m: float
    height_m: float
    label: str = "vehicle"

    def __post_init__(self):
        if not (self.width_m > 0 and self.height_m > 0):
            raise ValueError("box extents must be positive")
        if math.hypot(self.center_x_m, self.center_y_m) > DEFAULT_GEOMETRY.max_range_m:
            raise ValueError("box centre lies outside the radar disc")

    def as_detection(self, score: float = 1.0) -> Detection:
        return Detection(self.center_x_m, self.center_y_m, self.width_m, self.height_m, score)


@dataclass(frozen=True)
class OracleBackend:
    annotations: Mapping[int, tuple] = field(default_factory=dict)

    @classmethod
    def from_boxes(cls, boxes: Sequence[GroundTruthBox]) -> "OracleBackend":
        grouped: dict[int, list] = {}
        for b in boxes:
            grouped.setdefault(b.frame_id, []).append(b)
        return cls({k: tuple(v) for k, v in grouped.items()})


@dataclass(frozen=True)
class BlobBackend:
    """Threshold, 4-connected components, boxes.

    ``threshold=None`` uses mean + 3 std of the frame's non-zero pixels.
    """

    threshold: float | None = None
    min_area_px: int = 6
    max_detections: int = 30

    def __post_init__(self):
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("blob threshold must be positive")
        if self.min_area_px < 1:
            raise ValueError("min_area_px must be at least 1")
        if self.max_detections < 1:
            raise ValueError("max_detections must be at least 1")


@dataclass
class DetectionResult:
    detections: list
    missing_annotations: bool = False


def auto_threshold(data: np.ndarray) -> float:
    vals = data[data > 0].astype(np.float64)
    if vals.size == 0:
        return math.inf
    return float(vals.mean() + 3.0 * vals.std())


def _blob_detect(frame: CartesianFrame, backend: BlobBackend) -> list[Detection]:
    data = frame.data
    thr = backend.threshold if backend.threshold is not None else auto_threshold(data)
    if not math.isfinite(thr):
        return []
    mask = data > thr
    labels, n = ndimage.label(mask)  # default structure is 4-connected
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(np.ones_like(data, dtype=np.float64), labels, idx)
    masses = ndimage.sum_labels(data.astype(np.float64), labels, idx)
    slices = ndimage.find_objects(labels)
    keep = [k for k in range(n) if areas[k] >= backend.min_area_px]
    keep.sort(key=lambda k: (-masses[k], k))
    dets = []
    mpp = frame.meters_per_pixel
    for k in keep[: backend.max_detections]:
        rs, cs = slices[k]
        row_c = (rs.start + rs.stop - 1) / 2
        col_c = (cs.start + cs.stop - 1) / 2
        x, y = frame.pixel_to_xy(row_c, col_c)
        mean_intensity = masses[k] / areas[k]
        score = min(1.0, mean_intensity / (2.0 * thr))
        try:
            dets.append(Detection(x, y, (cs.stop - cs.start) * mpp, (rs.stop - rs.start) * mpp, score))
        except ValueError:
            # boxes whose centre straddles the disc edge
            continue
    return dets


def detect(frame: CartesianFrame, backend) -> DetectionResult:
    """Run ``backend`` on a Cartesian frame.

    The oracle returns the frame's annotations with score 1.0; a frame with
    no annotation entry yields no detections and sets ``missing_annotations``.
    """
    if isinstance(backend, OracleBackend):
        boxes = backend.annotations.get(frame.frame_id)
        if boxes is None:
            log.warning("no annotations for frame %d", frame.frame_id)
            return DetectionResult([], missing_annotations=True)
        return DetectionResult([b.as_detection(1.0) for b in boxes])
    if isinstance(backend, BlobBackend):
        return DetectionResult(_blob_detect(frame, backend))
    raise TypeError(f"unknown detector backend {backend!r}")


# ---------------------------------------------------------------------------
# annotation files (one JSON object per line)

_ANN_FIELDS = ("frame_id", "center_x_m", "center_y_m", "width_m", "height_m")


def read_annotations(path) -> list[GroundTruthBox]:
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                boxes.append(GroundTruthBox(int(rec["frame_id"]), *(float(rec[k]) for k in _ANN_FIELDS[1:]),
                                            label=rec.get("label", "vehicle")))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad annotation record: {exc}") from exc
    return boxes


def write_annotations(path, boxes: Sequence[GroundTruthBox]) -> None:
    with open(path, "w") as fh:
        for b in boxes:
            fh.write(json.dumps(asdict(b)) + "\n")


def detection_record(det: Detection) -> dict:
    return {
        "center_x_m": det.center_x_m,
        "center_y_m": det.center_y_m,
        "width_m": det.width_m,
        "height_m": det.height_m,
        "score": det.score,
        "size_class": det.size_class.value,
    }


def detection_from_record(rec: Mapping) -> Detection:
    from .importance import SizeClass

    return Detection(rec["center_x_m"], rec["center_y_m"], rec["width_m"], rec["height_m"],
                     rec["score"], SizeClass(rec["size_class"]))
