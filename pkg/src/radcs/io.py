"""Scene directories, frame files and manifests.

A scene directory holds ``manifest.json``, the frame files it lists and an
annotation file with one JSON record per box::

    {
      "scene_name": "city-01",
      "weather": "city",
      "frames": ["frame_0001.radf", "frame_0002.radf"],
      "frame_ids": [1, 2],
      "annotations": "annotations.jsonl",
      "geometry": {"max_range_m": 100.0}
    }

``frame_ids`` defaults to 1..N and ``geometry`` may be omitted. Frames are
``.radf`` (raw little-endian float32, 400x576, row-major) or 8-bit
single-channel PNG.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detector import GroundTruthBox, read_annotations, write_annotations
from .geometry import N_AZIMUTH, N_RANGE, FrameGeometry, PolarFrame

MANIFEST_NAME = "manifest.json"


class SceneError(ValueError):
    pass


def write_radf(path, frame: PolarFrame) -> None:
    Path(path).write_bytes(np.ascontiguousarray(frame.data, dtype="<f4").tobytes())


def read_radf(path, frame_id: int = 0) -> PolarFrame:
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != N_AZIMUTH * N_RANGE:
        raise SceneError(f"{path}: expected {N_AZIMUTH * N_RANGE} float32 values, found {raw.size}")
    return PolarFrame(raw.reshape(N_AZIMUTH, N_RANGE).astype(np.float32), frame_id)


def read_png(path, frame_id: int = 0) -> PolarFrame:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("L", "P"):
            raise SceneError(f"{path}: expected a single-channel 8-bit PNG, got mode {img.mode}")
        data = np.asarray(img.convert("L"), dtype=np.float32)
    if data.shape != (N_AZIMUTH, N_RANGE):
        raise SceneError(f"{path}: PNG is {data.shape}, expected {(N_AZIMUTH, N_RANGE)}")
    return PolarFrame(data, frame_id)


def read_frame(path, frame_id: int = 0) -> PolarFrame:
    suffix = Path(path).suffix.lower()
    if suffix == ".radf":
        return read_radf(path, frame_id)
    if suffix == ".png":
        return read_png(path, frame_id)
    raise SceneError(f"{path}: unsupported frame format {suffix!r}")


@dataclass
class SceneManifest:
    scene_name: str
    frames: list[str]
    annotations: str | None = None
    frame_ids: list[int] | None = None
    weather: str = ""
    geometry: dict = field(default_factory=dict)
    root: Path = Path(".")

    def __post_init__(self):
        if not self.frames:
            raise SceneError("a scene manifest must list at least one frame")
        if self.frame_ids is None:
            self.frame_ids = list(range(1, len(self.frames) + 1))
        if len(self.frame_ids) != len(self.frames):
            raise SceneError("frame_ids and frames differ in length")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise SceneError("frame_ids must be strictly increasing")

    @property
    def frame_paths(self) -> list[Path]:
        return [self.root / f for f in self.frames]

    @property
    def annotation_path(self) -> Path | None:
        return self.root / self.annotations if self.annotations else None

    def frame_geometry(self) -> FrameGeometry:
        extra = set(self.geometry) - {"max_range_m"}
        if extra:
            raise SceneError(f"unsupported geometry overrides: {sorted(extra)}")
        return FrameGeometry(max_range_m=float(self.geometry.get("max_range_m", 100.0)))

    def to_json(self) -> dict:
        out = {"scene_name": self.scene_name, "weather": self.weather, "frames": self.frames,
               "frame_ids": self.frame_ids, "annotations": self.annotations}
        if self.geometry:
            out["geometry"] = self.geometry
        return out


def load_manifest(scene_dir) -> SceneManifest:
    root = Path(scene_dir)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise SceneError(f"{root}: no {MANIFEST_NAME}")
    try:
        raw = json.loads(path.read_text())
        man = SceneManifest(
            scene_name=raw.get("scene_name", root.name),
            frames=list(raw["frames"]),
            annotations=raw.get("annotations"),
            frame_ids=raw.get("frame_ids"),
            weather=raw.get("weather", ""),
            geometry=raw.get("geometry") or {},
            root=root,
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SceneError(f"{path}: malformed manifest: {exc}") from exc
    missing = [str(p) for p in man.frame_paths if not p.is_file()]
    if man.annotation_path is not None and not man.annotation_path.is_file():
        missing.append(str(man.annotation_path))
    if missing:
        raise SceneError(f"{path}: missing files: {', '.join(missing)}")
    return man


@dataclass
class Scene:
    manifest: SceneManifest
    frames: list[PolarFrame]
    boxes: list[GroundTruthBox] | None


def load_scene(scene_dir) -> Scene:
    man = load_manifest(scene_dir)
    frames = [read_frame(p, fid) for p, fid in zip(man.frame_paths, man.frame_ids)]
    boxes = read_annotations(man.annotation_path) if man.annotation_path else None
    return Scene(man, frames, boxes)


def write_scene(out_dir, frames, boxes, scene_name: str = "synthetic", weather: str = "synthetic",
                extra: dict | None = None) -> SceneManifest:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for f in frames:
        name = f"frame_{f.frame_id:04d}.radf"
        write_radf(out / name, f)
        names.append(name)
    write_annotations(out / "annotations.jsonl", boxes)
    man = SceneManifest(scene_name, names, "annotations.jsonl", [f.frame_id for f in frames], weather, root=out)
    doc = man.to_json()
    if extra:
        doc.update(extra)
    (out / MANIFEST_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return man
