"""Bicubic PSNR/SSIM of an HR folder at x2/x3/x4 next to the reference numbers.

    python3 scripts/bicubic_baseline.py /path/to/Set5
"""
import sys
from pathlib import Path

import numpy as np

from rfdn.cli import eval_image
from rfdn.data import list_images

REFERENCE = {2: (33.66, 0.9299), 3: (30.39, 0.8682), 4: (28.42, 0.8104)}


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "data/Set5")
    paths = list_images(root) if root.is_dir() else []
    if not paths:
        sys.exit(f"no images in {root}")
    for scale, (ref_p, ref_s) in REFERENCE.items():
        results = [eval_image(p, scale, scale) for p in paths]
        p = np.mean([r.psnr_db for r in results])
        s = np.mean([r.ssim for r in results])
        print(f"x{scale}  PSNR {p:.2f} (ref {ref_p:.2f}, {p - ref_p:+.2f})  "
              f"SSIM {s:.4f} (ref {ref_s:.4f}, {s - ref_s:+.4f})")


if __name__ == "__main__":
    main()
