"""Scene-run report directories.

Layout::

    config.json          run configuration and scene reference
    metrics.csv          one row per frame plus a "scene" aggregate row
    detections.jsonl     detections on each stored frame
    frames/frame_NNNN.rplan       sampling plan
    frames/frame_NNNN.rmeas       stored measurements
    frames/frame_NNNN.radf        reconstructed polar frame
    frames/frame_NNNN_plan.csv    the plan, human readable
    frames/frame_NNNN.json        importance bitmap, provenance, solver report

Nothing in a report depends on wall-clock time or the output path, so two
runs with the same inputs produce byte-identical directories.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

from .allocation import plan_csv_rows, read_rplan, write_rplan
from .detector import BlobBackend, OracleBackend, detection_from_record, detection_record
from .evaluation import METRIC_COLUMNS, FrameSummary, frame_metrics, frame_row, scene_row
from .io import load_scene, read_radf, write_radf
from .pipeline import SceneConfig, SceneRun, summaries, truth_by_frame
from .sensing import write_rmeas


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def backend_description(backend) -> dict:
    if isinstance(backend, OracleBackend):
        return {"kind": "oracle"}
    if isinstance(backend, BlobBackend):
        return {"kind": "blob", **dataclasses.asdict(backend)}
    return {"kind": type(backend).__name__}


def config_record(config: SceneConfig, scene_dir=None, scene_name: str | None = None) -> dict:
    return {
        "scene_dir": str(Path(scene_dir).resolve()) if scene_dir is not None else None,
        "scene_name": scene_name,
        "sampling_rate": config.sampling_rate,
        "variant": config.variant,
        "backend": backend_description(config.backend),
        "seed": config.seed,
        "n_frames": config.n_frames,
        "solver": dataclasses.asdict(config.solver),
        "mask": dataclasses.asdict(config.mask),
        "plan_from_original": config.plan_from_original,
        "resync_every": config.resync_every,
    }


def _frame_doc(rec) -> dict:
    conv = rec.convergence
    return {
        "frame_id": rec.frame_id,
        "important_bitmap": rec.mask_used.packed().hex(),
        "n_important": len(rec.mask_used),
        "variant": rec.mask_used.variant.value if rec.mask_used.variant else None,
        "provenance": [detection_record(d) for d in rec.mask_used.source_detections],
        "plan": {"S": rec.plan.target_budget, "total_m": rec.plan.total_m, "x1": rec.plan.x1,
                 "x2": rec.plan.x2, "relaxed": rec.plan.relaxed},
        "solver": {"cs_blocks": conv.cs_blocks, "unconverged": conv.n_unconverged,
                   "unconverged_blocks": [int(b) for b in (~conv.converged).nonzero()[0]],
                   "max_residual": float(conv.residuals.max())},
        "detector_failed": rec.detector_failed,
        "missing_annotations": rec.missing_annotations,
    }


def write_report(run: SceneRun, out_dir, truth, scene_dir=None, scene_name: str | None = None) -> Path:
    out = Path(out_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config_record(run.config, scene_dir, scene_name), indent=2, sort_keys=True) + "\n")

    with open(out / "detections.jsonl", "w") as fh:
        for rec in run.records:
            for d in rec.detections:
                fh.write(json.dumps({"frame_id": rec.frame_id, **detection_record(d)}, sort_keys=True) + "\n")

    for rec in run.records:
        stem = frames_dir / f"frame_{rec.frame_id:04d}"
        write_rplan(stem.with_suffix(".rplan"), rec.plan)
        write_rmeas(stem.with_suffix(".rmeas"), rec.measurements)
        write_radf(stem.with_suffix(".radf"), rec.reconstruction)
        with open(f"{stem}_plan.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("az_block", "range_block", "important", "rate", "m"))
            w.writerows(plan_csv_rows(rec.plan))
        stem.with_suffix(".json").write_text(json.dumps(_frame_doc(rec), indent=2, sort_keys=True) + "\n")

    sums = summaries(run.records, truth_by_frame(truth))
    rows = [frame_row(s) for s in sums] + [scene_row(sums)]
    (out / "metrics.csv").write_text(metrics_csv(rows))
    return out


def evaluate_report(report_dir) -> str:
    """Recompute ``metrics.csv`` from a stored report and its source scene."""
    rdir = Path(report_dir)
    cfg = json.loads((rdir / "config.json").read_text())
    if not cfg.get("scene_dir"):
        raise ValueError(f"{rdir}: report does not reference its scene")
    scene = load_scene(cfg["scene_dir"])
    geom = scene.manifest.frame_geometry()
    truth: dict[int, list] = {}
    for b in scene.boxes or ():
        truth.setdefault(b.frame_id, []).append(b)
    dets: dict[int, list] = {}
    with open(rdir / "detections.jsonl") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                dets.setdefault(rec["frame_id"], []).append(detection_from_record(rec))

    sums = []
    for frame in scene.frames:
        stem = rdir / "frames" / f"frame_{frame.frame_id:04d}"
        if not stem.with_suffix(".radf").exists():
            break
        recon = read_radf(stem.with_suffix(".radf"), frame.frame_id)
        plan = read_rplan(stem.with_suffix(".rplan"))
        doc = json.loads(stem.with_suffix(".json").read_text())
        fdets = dets.get(frame.frame_id, [])
        ftruth = truth.get(frame.frame_id, [])
        metrics = frame_metrics(frame, recon, fdets, ftruth, geom)
        sums.append(FrameSummary(frame.frame_id, metrics, fdets, ftruth, plan.total_m, doc["solver"]["unconverged"]))
    rows = [frame_row(s) for s in sums] + [scene_row(sums)]
    return metrics_csv(rows)
