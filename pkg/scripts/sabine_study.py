"""Compare the Schroeder RT60 of simulated RIRs with Sabine and Eyring predictions.

Prints one row per sampled room and a summary, then a sweep over cubes and
flat rooms that shows where the image-source decay departs from Sabine.
"""
import argparse
import dataclasses

import numpy as np

from foascene.acceptance import sabine_study
from foascene.rir import simulate_rir
from foascene.scene import RoomSpec


def shape_sweep(alphas=(0.1, 0.2, 0.4)) -> None:
    shapes = [(6.0, 6.0, 6.0), (8.0, 8.0, 8.0), (12.0, 12.0, 3.375), (20.0, 15.0, 3.0)]
    print("\nshape sweep (Schroeder / Sabine)")
    print("dimensions            " + "  ".join(f"a={a:.1f}" for a in alphas))
    for dims in shapes:
        mic = tuple(d / 2 + 0.31 * (i + 1) for i, d in enumerate(dims))
        source = tuple(m - 1.3 + 0.4 * i for i, m in enumerate(mic))
        ratios = []
        for alpha in alphas:
            room = RoomSpec(dimensions=dims, mic_position=mic, wall_absorption=(alpha,) * 6,
                            candidate_source_positions=(source,))
            rir = simulate_rir(room, source, max_duration=2.5 * room.sabine_rt60())
            ratios.append(rir.rt60_s / room.sabine_rt60())
        print(f"{str(dims):22s}" + "  ".join(f"{r:5.2f}" for r in ratios))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rooms", type=int, default=20)
    parser.add_argument("--seed", type=int, default=6)
    parser.add_argument("--no-sweep", action="store_true")
    args = parser.parse_args()

    rows = sabine_study(args.rooms, args.seed)
    print(f"{'dimensions (m)':26s} {'alpha':>5s} {'sabine':>7s} {'eyring':>7s} {'schroeder':>9s} {'dev':>6s}")
    for row in rows:
        dims = "x".join(f"{d:.1f}" for d in row["dimensions"])
        print(f"{dims:26s} {row['alpha']:5.2f} {row['sabine_s']:7.3f} {row['eyring_s']:7.3f} "
              f"{row['schroeder_s']:9.3f} {row['deviation']:+6.0%}")
    dev = np.array([r["deviation"] for r in rows])
    print(f"\nwithin 25%: {int(np.sum(np.abs(dev) <= 0.25))}/{len(rows)}; "
          f"median {np.median(dev):+.0%}; worst {dev[np.argmax(np.abs(dev))]:+.0%}")
    if not args.no_sweep:
        shape_sweep()


if __name__ == "__main__":
    main()
