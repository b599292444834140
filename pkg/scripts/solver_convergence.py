"""How many basis pursuit iterations does a scene actually need?

Two views:
  * single blocks with k random DCT coefficients: recovery error against m
  * whole synthetic scenes: mean NMSE and in-box NMSE against the iteration cap

Usage: python3 scripts/solver_convergence.py [--seeds 0 1] [--caps 30 100 300]
"""

import argparse
import time

import numpy as np

from radcs.detector import OracleBackend
from radcs.geometry import BLOCK_SIZE, BlockIndex
from radcs.pipeline import SceneConfig, run_scene
from radcs.sensing import BPSolverConfig, build_measurement_matrix, idct2, reconstruct_block, sense_block
from radcs.synthetic import SceneSpec, generate_synthetic_scene, random_targets


def block_study(trials: int, k: int):
    rng = np.random.default_rng(0)
    print(f"sparse blocks, k={k}, {trials} trials per m")
    print("    m  recovered<1e-3  median err  mean iters")
    for m in (96, 144, 192, 240, 288, 384):
        errs, iters = [], []
        for t in range(trials):
            c = np.zeros(BLOCK_SIZE)
            c[rng.choice(BLOCK_SIZE, k, replace=False)] = rng.standard_normal(k)
            x = idct2(c)
            res = reconstruct_block(sense_block(x, build_measurement_matrix(t, m, BlockIndex(0, 0), m)))
            errs.append(np.linalg.norm(res.x - x) / np.linalg.norm(x))
            iters.append(res.iterations)
        errs = np.array(errs)
        print(f"  {m:3d}  {np.sum(errs < 1e-3):5d}/{trials:<5d}     {np.median(errs):.1e}   {np.mean(iters):7.0f}")


def scene_study(seeds, caps, rate: float, frames: int):
    print(f"\nscenes at {rate:.0%}, radinfo2, {frames} frames")
    print("  seed   cap   mean nmse   mean box nmse   s/frame")
    for seed in seeds:
        spec = SceneSpec(random_targets(4, frames, seed), frames, seed=seed)
        fr, boxes = generate_synthetic_scene(spec)
        for cap in caps:
            cfg = SceneConfig(sampling_rate=rate, backend=OracleBackend.from_boxes(boxes), seed=seed,
                              solver=BPSolverConfig(max_iterations=cap))
            t0 = time.perf_counter()
            run = run_scene(fr, boxes, cfg)
            dt = (time.perf_counter() - t0) / frames
            print(f"  {seed:4d}  {cap:4d}   {np.mean(run.nmse_series()[1:]):.3e}     "
                  f"{np.nanmean(run.box_nmse_series()[1:]):.3e}      {dt:.2f}")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    p.add_argument("--caps", type=int, nargs="+", default=[30, 100, 300])
    p.add_argument("--rate", type=float, default=0.2)
    p.add_argument("--frames", type=int, default=6)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--k", type=int, default=10)
    args = p.parse_args()
    block_study(args.trials, args.k)
    scene_study(args.seeds, args.caps, args.rate, args.frames)


if __name__ == "__main__":
    main()
