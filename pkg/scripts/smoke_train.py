"""Overfit one HR image and compare against bicubic upscaling.

    python3 scripts/smoke_train.py --image tests/data/astronaut_128.png --steps 500
"""
import argparse
import time

import numpy as np

from rfdn.arch import ModelConfig, build_rfdn, rfdn_forward
from rfdn.data import degrade, load_image, upscale_bicubic
from rfdn.metrics import psnr_y
from rfdn.train import TrainConfig, train_loop


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--image", default="tests/data/astronaut_128.png")
    ap.add_argument("--scale", type=int, default=2)
    ap.add_argument("--channels", type=int, default=48)
    ap.add_argument("--blocks", type=int, default=6)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--patch", type=int, default=32)
    ap.add_argument("--lr", type=float, default=5e-4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pair = degrade(load_image(args.image), args.scale)
    model, weights = build_rfdn(ModelConfig(args.scale, args.channels, args.blocks), args.seed)
    cfg = TrainConfig(steps=args.steps, batch=args.batch, patch=args.patch, lr=args.lr,
                      seed=args.seed)
    t0 = time.perf_counter()
    weights, trace = train_loop(model, weights, [pair], cfg)
    elapsed = time.perf_counter() - t0

    sr = np.round(np.clip(rfdn_forward(model, weights, pair.lr / np.float32(255)) * 255, 0, 255))
    bic = np.round(upscale_bicubic(pair.lr, args.scale))
    p_sr = psnr_y(sr, pair.hr, args.scale)
    p_bic = psnr_y(bic, pair.hr, args.scale)
    losses = np.array([r.loss for r in trace])
    print(f"{args.steps} steps in {elapsed:.0f}s")
    print(f"PSNR  network {p_sr:.2f} dB  bicubic {p_bic:.2f} dB  gain {p_sr - p_bic:+.2f} dB")
    if len(losses) >= 20:
        print(f"loss  first-10 mean {losses[:10].mean():.4f}  last-10 mean {losses[-10:].mean():.4f}")


if __name__ == "__main__":
    main()
