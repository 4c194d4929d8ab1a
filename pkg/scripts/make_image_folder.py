#!/usr/bin/env python3
"""Export a synthetic dataset as a folder of PNGs laid out as
<out>/<source>/<class>/<n>.png, the layout the folder loader ingests.

Useful for exercising the `data.kind = folder` path end to end:

    python3 scripts/make_image_folder.py --out /tmp/images
    # then point a config at it:  data.kind = folder, data.path = /tmp/images
"""
import argparse
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
from PIL import Image

from fedsim.data import generate_synthetic


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="root directory to create")
    ap.add_argument("--classes", type=int, default=11)
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--side", type=int, default=128)
    ap.add_argument("--skew", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = generate_synthetic(
        args.classes, args.per_class, class_source_skew=args.skew,
        seed=args.seed, side=args.side,
    )
    out = Path(args.out)
    counters: dict[tuple[str, int], int] = defaultdict(int)
    for rec in ds.records:
        d = out / rec.source / f"class{rec.label:02d}"
        d.mkdir(parents=True, exist_ok=True)
        n = counters[(rec.source, rec.label)]
        counters[(rec.source, rec.label)] += 1
        arr = (np.clip(rec.pixels, 0.0, 1.0) * 255.0).round().astype(np.uint8)
        Image.fromarray(arr).save(d / f"{n:04d}.png")
    print(f"wrote {len(ds.records)} images under {out} "
          f"({args.classes} classes, sources {', '.join(ds.sources)})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
