"""Generate a small corpus with the CLI, score render(ref) against it and print the summary table.

Every metric should be perfect: count accuracy and tuple score 1, all
errors 0. WER and XY direction accuracy are absent on clips without speech
or without a non-polar source.
"""
import argparse
import json
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from foascene.demo_pool import make_demo_pool


def foascene(*args: str) -> str:
    result = subprocess.run([sys.executable, "-m", "foascene", *args], capture_output=True, text=True)
    if result.returncode:
        sys.exit(f"foascene {args[0]} failed ({result.returncode}):\n{result.stderr}")
    return result.stdout


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--clips", type=int, default=100)
    parser.add_argument("--rooms", type=int, default=4)
    parser.add_argument("--seed", type=int, default=10)
    parser.add_argument("--work-dir", help="keep outputs here instead of a temporary directory")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        work = Path(args.work_dir or tmp)
        start = time.perf_counter()
        pool = make_demo_pool(work / "pool")
        data = work / "data"
        foascene("synth", "--seed", str(args.seed), "--pool", str(pool), "--out", str(data),
                 "--rooms", str(args.rooms), "--clips", str(args.clips))
        for protocol in ("os", "om"):
            report = work / f"report_{protocol}.json"
            foascene("eval", "--ref", str(data / "manifest.jsonl"), "--hyp", str(data / "manifest.jsonl"),
                     "--protocol", protocol, "--report", str(report))
            print(f"# protocol {protocol.upper()}")
            print(foascene("report", str(report), "--group-by", "n_src", "--format", "table"))
        summary = json.loads((work / "report_os.json").read_text())["summary"]["all"]
        print(f"{args.clips} clips, tuple score {summary['tuple_score']['mean']:.3f}, "
              f"{time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
