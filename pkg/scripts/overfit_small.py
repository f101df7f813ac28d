"""Overfit the desk-scale model on a handful of generated samples.

Generates the corpus if missing, trains, reports the full-grid train error
and writes the loss curve + checkpoint. Useful as a quick end-to-end sanity
run on a laptop CPU.

    python scripts/overfit_small.py --out runs/overfit --count 8 --epochs 200
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from pdedag.config import DESK_MODEL, TrainConfig
from pdedag.datagen import generate_dataset
from pdedag.dataio import read_dataset
from pdedag.training import evaluate, train


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", type=Path, default=Path("runs/overfit"))
    parser.add_argument("--count", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--seed", type=int, default=101)
    parser.add_argument("--lr", type=float, default=3e-3)
    parser.add_argument("--points", type=int, default=8192)
    args = parser.parse_args()

    data_dir = args.out / "data"
    if not (data_dir / "manifest.json").exists():
        print(f"generating {args.count} samples ...")
        generate_dataset(data_dir, count=args.count, base_seed=args.seed)
    bundle = read_dataset(data_dir)

    cfg = TrainConfig(batch_size=1, base_lr=args.lr, epochs=args.epochs,
                      warmup_epochs=10, points_per_sample=args.points,
                      seed=args.seed, test_fraction=0.0, augment=True)
    start = time.time()
    result = train(bundle.samples, DESK_MODEL, cfg, out_dir=args.out)
    print(f"trained {args.epochs} epochs in {time.time() - start:.0f} s; "
          f"final sampled-point loss {result.final_train_loss:.4f}")
    metrics = evaluate(result.params, DESK_MODEL, bundle.samples)
    print(f"full-grid train relative L2: {metrics['mean']:.4f}")
    for i, v in enumerate(metrics["per_sample"]):
        print(f"  sample {i}: {v:.4f}")


if __name__ == "__main__":
    main()
