"""Run the scripted gen -> train -> eval pipeline twice and compare bytes.

Exercises the same path as the determinism acceptance criterion, via the CLI
with fixed seeds and sequential (bit-reproducible) reductions.

    python scripts/pipeline_determinism.py --workdir /tmp/pipeline
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from pdedag.cli import run_cli


def run_once(root: Path, tag: str) -> bytes:
    data = root / f"data_{tag}"
    run_dir = root / f"run_{tag}"
    metrics = root / f"metrics_{tag}.json"
    for argv in (
        ["gen", "--count", "10", "--seed", "11", "--out", str(data)],
        ["train", "--data", str(data), "--out", str(run_dir), "--seed", "11",
         "--epochs", "50", "--points", "2048", "--sequential"],
        ["eval", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(data),
         "--out", str(metrics), "--sequential"],
    ):
        code = run_cli(argv)
        if code != 0:
            raise SystemExit(f"step {argv[0]} failed with exit code {code}")
    return metrics.read_bytes()


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", type=Path, default=Path("/tmp/pdedag_pipeline"))
    args = parser.parse_args()
    args.workdir.mkdir(parents=True, exist_ok=True)

    first = run_once(args.workdir, "a")
    second = run_once(args.workdir, "b")
    if first == second:
        print("pipeline metrics are bit-identical across runs")
    else:
        print("MISMATCH between pipeline runs")
        raise SystemExit(1)


if __name__ == "__main__":
    main()
