"""Write the demo scene used in the README: 20 frames, four moving targets.

Generated rather than stored; the same seed always produces the same bytes.
"""

import argparse

from radcs.io import write_scene
from radcs.synthetic import SceneSpec, generate_synthetic_scene, random_targets


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="demo_scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--targets", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    args = p.parse_args()

    targets = random_targets(args.targets, 20, args.seed)
    frames, boxes = generate_synthetic_scene(SceneSpec(targets, 20, args.noise, seed=args.seed))
    write_scene(args.out, frames, boxes, "demo", "synthetic",
                {"synthetic": {"seed": args.seed, "noise_level": args.noise, "targets": [vars(t) for t in targets]}})
    print(f"wrote {len(frames)} frames, {len(boxes)} boxes to {args.out}")


if __name__ == "__main__":
    main()
