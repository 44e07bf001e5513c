"""Variational denoising with a learned network regularizer.

A noisy vector v is cleaned by gradient descent on

    G(u) = ||u - v||^2 + lambda * ||f(u)||^2

starting from u = v.  Images go through the same solve patch by patch:
extract sliding 3x3 (or side x side) windows, map them to the network's
training domain with the stored affine normalizer, denoise each patch
independently, map back and reassemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigurationError, DivergenceError, ShapeError


@dataclass(frozen=True)
class DenoiseConfig:
    lam: float = 0.1
    steps: int = 200
    step_size: float = 0.1
    tol: float = 0.0  # stop when ||u_next - u|| falls below this
    backtracking: bool = False

    def __post_init__(self):
        if self.lam < 0 or self.steps < 0 or not self.step_size > 0:
            raise ConfigurationError(f"invalid denoise config {self}")


@dataclass(frozen=True)
class PatchConfig:
    side: int = 3
    stride: int = 3
    aggregation: str = "average"  # average | center

    def __post_init__(self):
        if not 1 <= self.stride <= self.side:
            raise ConfigurationError(f"stride must lie in [1, side], got {self}")
        if self.aggregation not in ("average", "center"):
            raise ConfigurationError(f"unknown aggregation {self.aggregation!r}")


@dataclass
class GrayImage:
    """Grayscale image with float intensities; [0,1] after load/save clamping."""

    pixels: np.ndarray  # (height, width)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ShapeError(f"image must be 2-D, got shape {self.pixels.shape}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def clamped(self):
        return GrayImage(np.clip(self.pixels, 0.0, 1.0))


def _objective(net, u, v, lam):
    f = nn.forward_batch(net, u)
    return np.einsum("ij,ij->i", u - v, u - v) + lam * np.einsum("ij,ij->i", f, f)


def _gradient(net, u, v, lam):
    f = nn.forward_batch(net, u)
    return 2.0 * (u - v) + 2.0 * lam * nn.input_gradient_batch(net, u, f)


def denoise_batch(net, v, cfg: DenoiseConfig):
    """Fixed-step descent on G for every row of v independently."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if cfg.lam == 0.0 or cfg.steps == 0:
        return v.copy()
    u = v.copy()
    for _ in range(cfg.steps):
        step = cfg.step_size * _gradient(net, u, v, cfg.lam)
        if not np.all(np.isfinite(step)):
            raise DivergenceError("denoising iterate diverged")
        u = u - step
        if cfg.tol > 0 and np.all(np.linalg.norm(step, axis=1) < cfg.tol):
            break
    return u


def denoise_vector(net, v, cfg: DenoiseConfig):
    """Denoise a single vector; optional backtracking keeps G non-increasing."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {v.shape}")
    if cfg.lam == 0.0 or cfg.steps == 0:
        return v.copy()
    if not cfg.backtracking:
        return denoise_batch(net, v[None, :], cfg)[0]

    u = v.copy()
    step = cfg.step_size
    g_cur = _objective(net, u[None, :], v[None, :], cfg.lam)[0]
    for _ in range(cfg.steps):
        grad = _gradient(net, u[None, :], v[None, :], cfg.lam)[0]
        if not np.all(np.isfinite(grad)):
            raise DivergenceError("denoising gradient diverged")
        while True:
            trial = u - step * grad
            g_trial = _objective(net, trial[None, :], v[None, :], cfg.lam)[0]
            if g_trial <= g_cur or step < 1e-12:
                break
            step *= 0.5
        if cfg.tol > 0 and np.linalg.norm(trial - u) < cfg.tol:
            u, g_cur = trial, g_trial
            break
        u, g_cur = trial, g_trial
    return u


# patch pipeline ----------------------------------------------------------


def _offsets(extent, side, stride):
    offs = list(range(0, extent - side + 1, stride))
    if offs[-1] != extent - side:
        offs.append(extent - side)
    return offs


def extract_patches(img: GrayImage, cfg: PatchConfig):
    """Row-major sliding windows; border windows are clamped so every pixel
    is covered.  Returns (patches as (N, side^2) rows, positions)."""
    if img.height < cfg.side or img.width < cfg.side:
        raise ShapeError(f"image {img.height}x{img.width} smaller than patch side {cfg.side}")
    rows = _offsets(img.height, cfg.side, cfg.stride)
    cols = _offsets(img.width, cfg.side, cfg.stride)
    patches = np.empty((len(rows) * len(cols), cfg.side * cfg.side))
    positions = []
    idx = 0
    for r in rows:
        for c in cols:
            patches[idx] = img.pixels[r : r + cfg.side, c : c + cfg.side].ravel()
            positions.append((r, c))
            idx += 1
    return patches, positions


def reassemble(patches, positions, width, height, aggregation="average"):
    """Rebuild an image from (possibly overlapping) patches.

    ``average`` takes the mean of all covering patch values per pixel;
    ``center`` takes, per pixel, the value from the patch whose center is
    nearest (row-major first on ties).  The output is clamped to [0,1].
    """
    patches = np.asarray(patches, dtype=np.float64)
    side = int(round(np.sqrt(patches.shape[1])))
    if side * side != patches.shape[1]:
        raise ShapeError(f"patch length {patches.shape[1]} is not a square")
    if aggregation == "average":
        acc = np.zeros((height, width))
        cover = np.zeros((height, width))
        for patch, (r, c) in zip(patches, positions):
            acc[r : r + side, c : c + side] += patch.reshape(side, side)
            cover[r : r + side, c : c + side] += 1.0
        if np.any(cover == 0):
            raise ShapeError("uncovered pixels in reassembly")
        out = acc / cover
    elif aggregation == "center":
        out = np.full((height, width), np.nan)
        best = np.full((height, width), np.inf)
        rr, cc = np.mgrid[0:side, 0:side]
        for patch, (r, c) in zip(patches, positions):
            center = (side - 1) / 2.0
            dist = (rr - center) ** 2 + (cc - center) ** 2
            win = best[r : r + side, c : c + side]
            take = dist < win
            win[take] = dist[take]
            block = out[r : r + side, c : c + side]
            block[take] = patch.reshape(side, side)[take]
        if np.any(np.isnan(out)):
            raise ShapeError("uncovered pixels in reassembly")
    else:
        raise ConfigurationError(f"unknown aggregation {aggregation!r}")
    return GrayImage(np.clip(out, 0.0, 1.0))


def denoise_image(net, normalizer, img: GrayImage, dcfg: DenoiseConfig, pcfg: PatchConfig):
    """Patch-wise variational denoising of a grayscale image."""
    if net.input_dim != pcfg.side * pcfg.side:
        raise ShapeError(
            f"net input dim {net.input_dim} != patch size {pcfg.side * pcfg.side}"
        )
    patches, positions = extract_patches(img, pcfg)
    v = normalizer.forward(patches)
    u = denoise_batch(net, v, dcfg)
    cleaned = normalizer.inverse(u)
    return reassemble(cleaned, positions, img.width, img.height, pcfg.aggregation)


# metrics -----------------------------------------------------------------

SNR_CAP_DB = 999.0


def snr_db(clean, x):
    """10 log10(||clean||^2 / ||clean - x||^2), capped at 999 dB."""
    clean = np.asarray(clean, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if clean.shape != x.shape:
        raise ShapeError(f"shape mismatch {clean.shape} vs {x.shape}")
    signal = np.sum(clean**2)
    if signal == 0:
        raise ConfigurationError("SNR undefined for an all-zero reference")
    noise = np.sum((clean - x) ** 2)
    if noise == 0:
        return SNR_CAP_DB
    return float(10.0 * np.log10(signal / noise))


def snr_gain(clean, noisy, denoised):
    return snr_db(clean, denoised) - snr_db(clean, noisy)


def psnr(reference, test):
    """10 log10(1 / MSE) for intensities in [0,1]; identical inputs -> 999."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ShapeError(f"shape mismatch {reference.shape} vs {test.shape}")
    mse = np.mean((reference - test) ** 2)
    if mse == 0:
        return SNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))
