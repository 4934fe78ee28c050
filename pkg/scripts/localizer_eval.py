"""Zone and octant accuracy of the intensity-vector localizer, anechoic and at a target RT60."""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from foascene.acceptance import localizer_trial
from foascene.demo_pool import make_demo_pool


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--clips", type=int, default=500)
    parser.add_argument("--rooms", type=int, default=10)
    parser.add_argument("--seed", type=int, default=8)
    parser.add_argument("--rt60", type=float, nargs="*", default=[0.5],
                        help="reverberant conditions to add after the anechoic run")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pool = make_demo_pool(Path(tmp) / "pool")
        for rt60 in [None] + list(args.rt60):
            trial = localizer_trial(pool, args.clips, args.seed, args.rooms, rt60)
            label = "anechoic" if rt60 is None else f"RT60 {rt60:.2f} s"
            measured = np.array(trial["rt60_s"], dtype=float)
            extra = "" if rt60 is None else f" (measured {measured.min():.2f}-{measured.max():.2f} s)"
            print(f"{label:14s} zone {trial['zone_accuracy']:.1%}  octant {trial['octant_accuracy']:.1%}{extra}")


if __name__ == "__main__":
    main()
