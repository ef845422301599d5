#!/usr/bin/env python3
"""Dilation sweep experiment: no module vs dilation 1..4 under one budget."""

import argparse
import sys
from pathlib import Path

from dsan.cli import main as cli_main
from dsan.data import generate_clean_images, save_image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default="out/ablation_data")
    ap.add_argument("--out", default="out/ablation")
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--batch", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    clean_dir = Path(args.root) / "clean"
    if not clean_dir.is_dir():
        clean_dir.mkdir(parents=True)
        for i, img in enumerate(generate_clean_images(10, 64, args.seed)):
            save_image(img, clean_dir / f"img{i:04d}.ppm")

    sys.exit(
        cli_main(
            [
                "ablation",
                "--out", args.out,
                "--seed", str(args.seed),
                "--set", f"data_root={args.root}",
                "--set", f"steps={args.steps}",
                "--set", f"batch_size={args.batch}",
            ]
        )
    )


if __name__ == "__main__":
    main()
