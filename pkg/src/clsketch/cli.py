"""Command-line front end.

Subcommands: gen-spiral, sketch, train, denoise, denoise-image, eval.
Every run echoes its flag map into a JSON manifest beside its output, so an
experiment can be reproduced (bit-exactly, seeds included) from the
manifest alone.  Progress goes to stderr; stdout carries one parseable JSON
line per command; data lives in files only.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import clsgd, data, denoise, io, nn, sketch
from .densities import ReluDensity
from .errors import (
    ClsketchError,
    ConfigurationError,
    DegenerateDensityError,
    DivergenceError,
    FileFormatError,
    FingerprintMismatchError,
    IndependenceError,
    ShapeError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_DIVERGENCE = 5
EXIT_FINGERPRINT = 6


def _progress(msg):
    print(msg, file=sys.stderr)


def _write_manifest(out_path, subcommand, flags):
    manifest = {"subcommand": subcommand, "flags": flags}
    payload = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    io.atomic_write(str(out_path) + ".manifest.json", payload.encode("ascii"))


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _parse_layers(text):
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"cannot parse layer list {text!r}") from None
    return dims


def _expand_config_file(argv):
    """Replace '--config FILE' with the file's key=value pairs as flags.

    The pairs are inserted before the explicit flags, so command-line flags
    win on conflict.
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ConfigurationError("--config needs a file argument")
    path = argv[i + 1]
    injected = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            injected += [f"--{key.strip()}", value.strip()]
    return argv[:i] + injected + argv[i + 2 :]


# subcommand handlers -------------------------------------------------------


def _cmd_gen_spiral(args):
    spec = data.SpiralSpec(n=args.n, jitter=args.jitter, seed=args.seed)
    points = data.generate_spiral(spec)
    io.write_pointcloud_csv(args.out, points)
    _write_manifest(args.out, "gen-spiral", {"n": args.n, "seed": args.seed, "jitter": args.jitter, "out": args.out})
    _emit({"n": args.n, "out": args.out})
    return EXIT_OK


def _cmd_sketch(args):
    # pass 1: bounds (and dimension); pass 2: sketch the normalized stream
    lo = hi = None
    n = 0
    sample = None
    for chunk in io.stream_pointcloud_csv(args.input):
        n += len(chunk)
        cmin, cmax = chunk.min(axis=0), chunk.max(axis=0)
        lo = cmin if lo is None else np.minimum(lo, cmin)
        hi = cmax if hi is None else np.maximum(hi, cmax)
        if sample is None:
            sample = chunk[:100000]
    if n == 0:
        raise FileFormatError(f"{args.input}: empty point cloud")
    d = len(lo)
    span = hi - lo
    normalizer = data.AffineNormalizer(lo=lo - 0.01 * span, hi=hi + 0.01 * span)

    scale = args.scale
    if scale is None:
        scale = sketch.suggest_frequency_scale(normalizer.forward(sample), seed=args.seed)
        _progress(f"auto frequency scale: {scale:.6g}")
    freqset = sketch.sample_frequencies(args.m, d, scale, args.seed)
    state = sketch.SketchState(freqset)
    for chunk in io.stream_pointcloud_csv(args.input):
        state.update_batch(normalizer.forward(chunk))
    io.write_sketch(args.out, state.finalize(), freqset, n)

    compression = n * d / args.m
    flags = {
        "input": args.input,
        "m": args.m,
        "scale": scale,
        "seed": args.seed,
        "out": args.out,
        "normalizer_lo": list(normalizer.lo),
        "normalizer_hi": list(normalizer.hi),
    }
    _write_manifest(args.out, "sketch", flags)
    _emit({"n": n, "m": args.m, "d": d, "compression": compression})
    return EXIT_OK


def _load_normalizer_for_sketch(args):
    path = args.normalizer or (args.sketch + ".manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        flags = manifest.get("flags", manifest)
        return data.AffineNormalizer(
            lo=np.asarray(flags["normalizer_lo"], dtype=np.float64),
            hi=np.asarray(flags["normalizer_hi"], dtype=np.float64),
        )
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise FileFormatError(
            f"cannot recover the data normalizer from {path} ({exc}); pass --normalizer"
        ) from None


_STEP_RULES = {
    "constant": lambda lr: clsgd.ConstantStep(lr),
    "diminishing": lambda lr: clsgd.DiminishingStep(lr),
    "adam": lambda lr: clsgd.AdamStep(lr),
}


def _cmd_train(args):
    zhat, freqset, _count = io.read_sketch(args.sketch)
    normalizer = _load_normalizer_for_sketch(args)
    layers = _parse_layers(args.layers)
    if layers[0] != freqset.d:
        raise ShapeError(f"first layer is {layers[0]} but the sketch has d={freqset.d}")
    algo = args.algo.replace("-", "_")
    alpha = "auto" if args.alpha == "auto" else float(args.alpha)
    config = clsgd.TrainConfig(
        algorithm=algo,
        iters=args.iters,
        grid_size=args.points,
        alpha=alpha,
        step_rule=_STEP_RULES[args.step_rule](args.lr),
        grid_seed=args.seed + 1,
        init_seed=args.seed,
        eval_seed=args.seed + 2,
    )
    net = nn.init_network(layers, config.init_seed)
    _progress(f"training {algo} for {args.iters} iterations on P={args.points}")
    net, history = clsgd.train(ReluDensity(), net, config, zhat, freqset)
    io.write_model(args.out, net, normalizer)
    if args.history:
        history.to_csv(args.history)
    flags = {k: getattr(args, k) for k in
             ("sketch", "algo", "layers", "points", "iters", "step_rule", "lr", "alpha", "seed", "out", "history")}
    _write_manifest(args.out, "train", flags)
    final = history.records[-1]
    _emit({"iters": args.iters, "final_loss": final[1], "out": args.out})
    return EXIT_OK


def _cmd_denoise(args):
    net, normalizer = io.read_model(args.model)
    points = io.read_pointcloud_csv(args.input)
    cfg = denoise.DenoiseConfig(lam=args.lam, steps=args.steps, step_size=args.lr)
    cleaned = normalizer.inverse(denoise.denoise_batch(net, normalizer.forward(points), cfg))
    io.write_pointcloud_csv(args.out, cleaned)
    flags = {k: getattr(args, k) for k in ("model", "input", "lam", "steps", "lr", "out")}
    _write_manifest(args.out, "denoise", flags)
    _emit({"n": len(points), "out": args.out})
    return EXIT_OK


def _cmd_denoise_image(args):
    net, normalizer = io.read_model(args.model)
    img = io.read_pgm(args.input)
    dcfg = denoise.DenoiseConfig(lam=args.lam, steps=args.steps, step_size=args.lr)
    pcfg = denoise.PatchConfig(side=args.patch, stride=args.stride, aggregation=args.agg)
    out = denoise.denoise_image(net, normalizer, img, dcfg, pcfg)
    io.write_pgm(args.out, out)
    flags = {k: getattr(args, k) for k in
             ("model", "input", "lam", "steps", "lr", "patch", "stride", "agg", "out")}
    _write_manifest(args.out, "denoise-image", flags)
    _emit({"width": out.width, "height": out.height, "out": args.out})
    return EXIT_OK


def _read_signal(path):
    if path.endswith(".pgm"):
        return io.read_pgm(path).pixels
    return io.read_pointcloud_csv(path)


def _cmd_eval(args):
    clean = _read_signal(args.clean)
    noisy = _read_signal(args.noisy)
    denoised = _read_signal(args.denoised)
    report = {
        "snr_clean_noisy_db": denoise.snr_db(clean, noisy),
        "snr_clean_denoised_db": denoise.snr_db(clean, denoised),
        "gain_db": denoise.snr_gain(clean, noisy, denoised),
        "psnr_noisy_db": denoise.psnr(clean, noisy),
        "psnr_denoised_db": denoise.psnr(clean, denoised),
    }
    payload = json.dumps(report, sort_keys=True, indent=2) + "\n"
    io.atomic_write(args.report, payload.encode("ascii"))
    flags = {k: getattr(args, k) for k in ("clean", "noisy", "denoised", "report")}
    _write_manifest(args.report, "eval", flags)
    _emit(report)
    return EXIT_OK


# parser --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="clsketch", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker thread budget")
    parser.add_argument("--deterministic", action="store_true",
                        help="force fixed-order reductions (the default numerics already are)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-spiral", help="generate a 2-D spiral point cloud")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_spiral)

    p = sub.add_parser("sketch", help="stream a CSV point cloud into a sketch")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--scale", type=float, default=None,
                   help="frequency std per coordinate (default: data-driven heuristic)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sketch)

    p = sub.add_parser("train", help="learn a network regularizer from a sketch")
    p.add_argument("--config", help="flat key=value file providing flag defaults")
    p.add_argument("--sketch", required=True)
    p.add_argument("--algo", choices=["naive", "unbiased", "fixed-grid"], default="naive")
    p.add_argument("--layers", default="2,64,64,128")
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--step-rule", dest="step_rule",
                   choices=["constant", "diminishing", "adam"], default="adam")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--alpha", default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalizer", default=None,
                   help="manifest holding the data normalizer (default: <sketch>.manifest.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("denoise", help="variational denoising of a CSV point cloud")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("denoise-image", help="patch-based denoising of a PGM image")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--patch", type=int, default=3)
    p.add_argument("--stride", type=int, default=3)
    p.add_argument("--agg", choices=["average", "center"], default="average")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_denoise_image)

    p = sub.add_parser("eval", help="SNR/PSNR report for clean/noisy/denoised files")
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--denoised", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_eval)

    return parser


def run(argv):
    """Parse and execute; returns the process exit code."""
    try:
        argv = _expand_config_file(list(argv))
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except (ConfigurationError, ShapeError, DegenerateDensityError, IndependenceError) as exc:
        _progress(f"error: {exc}")
        return EXIT_USAGE
    except FingerprintMismatchError as exc:
        _progress(f"error: {exc}")
        return EXIT_FINGERPRINT
    except DivergenceError as exc:
        _progress(f"error: {exc}")
        return EXIT_DIVERGENCE
    except FileFormatError as exc:
        _progress(f"error: {exc}")
        return EXIT_FORMAT
    except ClsketchError as exc:
        _progress(f"error: {exc}")
        return EXIT_USAGE
    except OSError as exc:
        _progress(f"error: {exc}")
        return EXIT_IO


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
