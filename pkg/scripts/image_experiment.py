#!/usr/bin/env python3
"""Patch-prior image denoising experiment.

Learns a 3x3-patch regularizer from a single training image (compressed to
one sketch), then denoises a held-out noisy image patch-by-patch and reports
PSNR before and after.

Typical desk-scale invocation (15-20 minutes of training):

    python3 scripts/image_experiment.py --patches 200000 --m 2000 \
        --points 10000 --iters 400 --scale 2.0 --out-dir /tmp/image
"""

import argparse
import json
import os
import time

import numpy as np

import clsketch as cs
from clsketch.denoise import DenoiseConfig, GrayImage, PatchConfig, denoise_image, psnr
from clsketch.io import write_pgm


def random_patches(img, count, side, seed):
    """Random side x side windows sampled uniformly over the image."""
    rng = np.random.default_rng(seed)
    h, w = img.shape
    rows = rng.integers(0, h - side + 1, size=count)
    cols = rng.integers(0, w - side + 1, size=count)
    out = np.empty((count, side * side))
    for i, (r, c) in enumerate(zip(rows, cols)):
        out[i] = img[r : r + side, c : c + side].ravel()
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--patches", type=int, default=200000, help="training patch count")
    ap.add_argument("--m", type=int, default=2000, help="sketch size")
    ap.add_argument("--scale", type=float, default=None, help="frequency std (default: heuristic)")
    ap.add_argument("--layers", default="9,64,64,128")
    ap.add_argument("--points", type=int, default=10000, help="grid size P")
    ap.add_argument("--iters", type=int, default=400)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--sigma", type=float, default=0.07, help="test noise std")
    ap.add_argument("--lambdas", default="0.003,0.01,0.03,0.1")
    ap.add_argument("--stride", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    t_start = time.perf_counter()

    train_img = cs.synthetic_image(256, 256, seed=11)
    patches = random_patches(train_img, args.patches, 3, args.seed)
    normalizer = cs.fit_normalizer(patches)
    xp = normalizer.forward(patches)

    scale = args.scale
    if scale is None:
        scale = cs.suggest_frequency_scale(xp[:20000], seed=args.seed + 1)
        print(f"frequency scale (heuristic): {scale:.4g}")
    freqset = cs.sample_frequencies(args.m, 9, scale, args.seed + 1)
    zhat = cs.sketch_dataset(freqset, xp)
    print(f"sketched {args.patches} patches into m={args.m} "
          f"({time.perf_counter()-t_start:.1f}s)")

    layers = tuple(int(v) for v in args.layers.split(","))
    net = cs.init_network(layers, args.seed + 2)
    config = cs.TrainConfig(
        algorithm="naive",
        iters=args.iters,
        grid_size=args.points,
        step_rule=cs.AdamStep(args.lr),
        grid_seed=args.seed + 3,
        init_seed=args.seed + 2,
        eval_grid_size=args.points,
    )
    t0 = time.perf_counter()
    net, history = cs.train(cs.ReluDensity(), net, config, zhat, freqset)
    train_seconds = time.perf_counter() - t0
    print(f"trained {args.iters} iterations in {train_seconds:.1f}s, "
          f"loss {history.records[0][1]:.4g} -> {history.records[-1][1]:.4g}")

    clean = cs.synthetic_image(128, 128, seed=77)
    noisy = GrayImage(np.clip(cs.add_gaussian_noise(clean, args.sigma, args.seed + 4), 0, 1))
    base_psnr = psnr(clean, noisy.pixels)
    print(f"noisy PSNR {base_psnr:.2f} dB")
    write_pgm(os.path.join(args.out_dir, "noisy.pgm"), noisy)

    pcfg = PatchConfig(side=3, stride=args.stride, aggregation="average")
    results = []
    best = None
    for lam in (float(s) for s in args.lambdas.split(",")):
        out = denoise_image(net, normalizer, noisy, DenoiseConfig(lam=lam, steps=100, step_size=0.1), pcfg)
        p = psnr(clean, out.pixels)
        results.append({"lambda": lam, "psnr_db": p, "gain_db": p - base_psnr})
        print(f"  lambda={lam:g}: PSNR {p:.2f} dB ({p - base_psnr:+.2f})")
        if best is None or p > best[1]:
            best = (lam, p, out)
    write_pgm(os.path.join(args.out_dir, "denoised.pgm"), best[2])

    report = {
        "patches": args.patches, "m": args.m, "scale": scale, "iters": args.iters,
        "points": args.points, "train_seconds": train_seconds,
        "psnr_noisy_db": base_psnr, "sweep": results,
        "best": {"lambda": best[0], "psnr_db": best[1], "gain_db": best[1] - base_psnr},
        "total_seconds": time.perf_counter() - t_start,
    }
    with open(os.path.join(args.out_dir, "image_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"best PSNR {best[1]:.2f} dB at lambda={best[0]:g}")


if __name__ == "__main__":
    main()
