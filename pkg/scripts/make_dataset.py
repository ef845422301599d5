#!/usr/bin/env python3
"""Generate a procedural clean-image corpus under <root>/clean/.

The degraded counterparts are produced lazily (and cached) by the train and
eval commands from the task named in the run config.
"""

import argparse
from pathlib import Path

from dsan.data import generate_clean_images, save_image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", help="dataset root; images land in <root>/clean/")
    ap.add_argument("--count", type=int, default=16)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    clean_dir = Path(args.root) / "clean"
    clean_dir.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(generate_clean_images(args.count, args.size, args.seed)):
        save_image(img, clean_dir / f"img{i:04d}.ppm")
    print(f"wrote {args.count} {args.size}x{args.size} images to {clean_dir}")


if __name__ == "__main__":
    main()
