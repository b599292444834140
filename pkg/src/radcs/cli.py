"""Command-line entry point: ``radcs {run,lp,gen-synthetic,gen-finetune-set,evaluate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .allocation import (
    AllocationError,
    BudgetLP,
    bounds_for_rate,
    budget_for_rate,
    solve_rates,
    solve_with_relaxation,
)
from .detector import BlobBackend, OracleBackend, write_annotations
from .geometry import N_BLOCKS, polar_to_cartesian
from .io import SceneError, load_scene, write_scene
from .pipeline import VARIANTS, SceneConfig, run_scene
from .report import evaluate_report, write_report
from .sensing import BPSolverConfig
from .synthetic import SceneSpec, SceneSpecError, Target, generate_synthetic_scene, random_targets

log = logging.getLogger("radcs")

PAPER_RATE_PERCENTS = (10, 20, 30)


class CLIError(Exception):
    pass


def _rate_from_percent(value: int, strict: bool = True) -> float:
    if value not in PAPER_RATE_PERCENTS:
        if strict:
            raise CLIError(f"unsupported rate {value}; choose one of 10, 20, 30")
        if not 7 <= value <= 55:
            raise CLIError(f"unsupported rate {value}; must lie between 7 and 55 percent")
    return value / 100.0


def _backend(name: str, scene):
    if name == "oracle":
        if scene.boxes is None:
            raise CLIError(f"scene {scene.manifest.scene_name!r} has no annotation file; "
                           "the oracle backend needs annotations")
        return OracleBackend.from_boxes(scene.boxes)
    return BlobBackend()


def _scene_config(args, scene, rate: float, **extra) -> SceneConfig:
    return SceneConfig(
        sampling_rate=rate,
        variant=args.variant,
        backend=_backend(args.backend, scene),
        seed=args.seed,
        n_frames=args.frames,
        solver=BPSolverConfig(max_iterations=args.max_iter),
        **extra,
    )


def cmd_run(args) -> int:
    rate = _rate_from_percent(args.rate)
    scene = load_scene(args.scene_dir)
    config = _scene_config(args, scene, rate)
    run = run_scene(scene.frames, scene.boxes, config, scene.manifest.frame_geometry())
    write_report(run, args.out, scene.boxes, args.scene_dir, scene.manifest.scene_name)
    agg = run.aggregate
    print(f"{scene.manifest.scene_name}: {len(run.records)} frames, variant={config.variant}, rate={args.rate}%")
    print(f"  AP50 {100 * agg['ap50']:.1f}  AP {100 * agg['ap']:.1f}  mean NMSE {agg['nmse']:.4g}  "
          f"unconverged blocks {agg['n_unconverged']}")
    print(f"  report written to {args.out}")
    return 0


def cmd_lp(args) -> int:
    if not 0 <= args.important <= N_BLOCKS:
        raise CLIError(f"--important must lie in [0, {N_BLOCKS}]")
    rate = _rate_from_percent(args.rate)
    x1l, x1u, x2l, x2u = bounds_for_rate(rate)
    lp = BudgetLP(
        args.important, N_BLOCKS - args.important,
        args.budget if args.budget is not None else budget_for_rate(rate),
        args.x1_lower if args.x1_lower is not None else x1l,
        args.x1_upper if args.x1_upper is not None else x1u,
        args.x2_lower if args.x2_lower is not None else x2l,
        args.x2_upper if args.x2_upper is not None else x2u,
    )
    first = solve_rates(lp)
    if not first.feasible:
        print(f"infeasible: {first.violated} constraint cannot be met")
        try:
            lp, sol = solve_with_relaxation(lp)
        except AllocationError as exc:
            print(f"no relaxation helps: {exc}")
            return 2
        print(f"relaxation applied: x1_lower lowered to {lp.x1_lower:.6g}")
    else:
        sol = first
    print(f"I={lp.I} O={lp.O} S={lp.S:g}")
    print(f"x1 = {sol.x1:.6f}")
    print(f"x2 = {sol.x2:.6f}")
    print(f"achieved budget = {sol.achieved_budget:.3f}")
    print(f"binding constraints: {', '.join(sol.binding) or 'none'}")
    return 0


def _parse_targets(spec: str, n_frames: int, seed: int):
    if spec.isdigit():
        return random_targets(int(spec), n_frames, seed)
    path = Path(spec)
    raw = json.loads(path.read_text()) if path.is_file() else json.loads(spec)
    if isinstance(raw, dict):
        raw = raw.get("targets", [])
    try:
        return tuple(Target(**t) for t in raw)
    except TypeError as exc:
        raise CLIError(f"bad target description: {exc}") from exc


def cmd_gen_synthetic(args) -> int:
    targets = _parse_targets(args.targets, args.frames, args.seed)
    spec = SceneSpec(targets, args.frames, args.noise, args.blur, args.seed)
    frames, boxes = generate_synthetic_scene(spec)
    extra = {"synthetic": {"seed": args.seed, "noise_level": args.noise, "blur_sigma_px": args.blur,
                           "targets": [vars(t) for t in targets]}}
    write_scene(args.out, frames, boxes, args.name, "synthetic", extra)
    print(f"wrote {len(frames)} frames and {len(boxes)} annotations to {args.out}")
    return 0


def cmd_gen_finetune_set(args) -> int:
    rate = _rate_from_percent(args.rate, strict=False)
    if args.rate != 20:
        log.warning("rate %d%% differs from the 20%% used for the reference fine-tuning set", args.rate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for scene_dir in args.scene_dirs:
        scene = load_scene(scene_dir)
        config = _scene_config(args, scene, rate, plan_from_original=True)
        run = run_scene(scene.frames, scene.boxes, config, scene.manifest.frame_geometry())
        sdir = out / scene.manifest.scene_name
        sdir.mkdir(parents=True, exist_ok=True)
        for rec in run.records:
            name = f"frame_{rec.frame_id:04d}.npy"
            np.save(sdir / name, polar_to_cartesian(rec.reconstruction).data)
            index.append({"scene": scene.manifest.scene_name, "frame_id": rec.frame_id,
                          "file": f"{scene.manifest.scene_name}/{name}", "sampled": not rec.plan.is_full,
                          "total_m": rec.plan.total_m})
        write_annotations(sdir / "annotations.jsonl", scene.boxes or [])
    doc = {"rate_percent": args.rate, "paper_rate": args.rate == 20, "variant": args.variant, "seed": args.seed,
           "frames": index}
    (out / "index.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    n_sampled = sum(1 for e in index if e["sampled"])
    print(f"wrote {n_sampled} sub-sampled and {len(index) - n_sampled} raw frames to {out}")
    return 0


def cmd_evaluate(args) -> int:
    text = evaluate_report(args.report_dir)
    if args.check:
        stored = (Path(args.report_dir) / "metrics.csv").read_text()
        if stored != text:
            print("metrics differ from the stored metrics.csv", file=sys.stderr)
            return 1
        print("metrics.csv reproduced exactly")
        return 0
    sys.stdout.write(text)
    return 0


def _add_run_args(p, rate_default: int | None = None):
    p.add_argument("--rate", type=int, required=rate_default is None, default=rate_default,
                   help="sampling rate in percent (10, 20 or 30)")
    p.add_argument("--variant", choices=VARIANTS, default="radinfo2")
    p.add_argument("--backend", choices=("oracle", "blob"), default="oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=None, help="stop after this many frames")
    p.add_argument("--max-iter", type=int, default=BPSolverConfig.max_iterations,
                   help="basis pursuit iteration cap per block")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radcs", description="Adaptive compressed sensing for polar radar frames")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the acquisition loop over a scene")
    p.add_argument("scene_dir")
    _add_run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("lp", help="solve the rate-allocation LP")
    p.add_argument("--important", type=int, required=True)
    p.add_argument("--rate", type=int, required=True)
    p.add_argument("--budget", type=float)
    p.add_argument("--x1-lower", type=float)
    p.add_argument("--x1-upper", type=float)
    p.add_argument("--x2-lower", type=float)
    p.add_argument("--x2-upper", type=float)
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("gen-synthetic", help="write a synthetic scene directory")
    p.add_argument("--targets", default="3", help="target count, JSON file, or inline JSON list")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="mean speckle intensity")
    p.add_argument("--blur", type=float, default=1.0, help="Gaussian blur sigma in pixels")
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("gen-finetune-set", help="emit sub-sampled frames planned from original frames")
    p.add_argument("scene_dirs", nargs="+")
    _add_run_args(p, rate_default=20)
    p.set_defaults(func=cmd_gen_finetune_set)

    p = sub.add_parser("evaluate", help="recompute metrics from a stored report")
    p.add_argument("report_dir")
    p.add_argument("--check", action="store_true", help="compare against the stored metrics.csv")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, SceneError, SceneSpecError, AllocationError) as exc:
        print(f"radcs: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
