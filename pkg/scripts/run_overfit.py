#!/usr/bin/env python3
"""Desk-scale overfit experiment: 8 hazy pairs, report PSNR lift vs baseline.

Builds the dataset if missing, trains, then prints train-set PSNR of the
restored images against the identity baseline (degraded vs clean).
"""

import argparse
from pathlib import Path

from dsan.config import RunConfig
from dsan.data import generate_clean_images, load_pairs, prepare_dataset, save_image, split_pairs
from dsan.train import dataset_spec, evaluate_pairs, run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="out/overfit_data")
    ap.add_argument("--out", default="out/overfit")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    clean_dir = Path(args.root) / "clean"
    if not clean_dir.is_dir():
        clean_dir.mkdir(parents=True)
        for i, img in enumerate(generate_clean_images(8, 64, args.seed)):
            save_image(img, clean_dir / f"img{i:04d}.ppm")

    cfg = RunConfig.from_items(
        {
            "data_root": args.root,
            "steps": str(args.steps),
            "batch_size": str(args.batch),
            "seed": str(args.seed),
        }
    )
    run = run_training(cfg, args.out)
    train_paths, _ = split_pairs(prepare_dataset(cfg.data_root, dataset_spec(cfg)))
    restored, baseline = evaluate_pairs(run.model, load_pairs(train_paths))
    print(f"train PSNR restored {restored:.2f} dB vs baseline {baseline:.2f} dB "
          f"(lift {restored - baseline:+.2f} dB)")


if __name__ == "__main__":
    main()
