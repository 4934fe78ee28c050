"""Write the synthetic demo source pool used by the examples and acceptance runs."""
import argparse

from foascene.demo_pool import make_demo_pool


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sample-rate", type=int, default=16000)
    args = parser.parse_args()
    print(make_demo_pool(args.out_dir, args.seed, args.sample_rate))


if __name__ == "__main__":
    main()
