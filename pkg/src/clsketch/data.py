"""Dataset generation, noise injection and affine normalization.

The training domain is always the unit hypercube: raw data is mapped into
[0,1]^d by a per-coordinate affine normalizer fitted with a small relative
margin (which keeps density mass off the exact cube boundary).

Noise levels are standard deviations throughout.  (The reference
experiments quote the same 0.15 number both as a variance and as a
standard deviation in different places; the visual noise magnitude matches
the standard-deviation reading, so ``sigma`` here is always a standard
deviation.)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class SpiralSpec:
    """2-D spiral: radius grows affinely from r_min to r_max over one turn."""

    n: int
    r_min: float = 0.3
    r_max: float = 1.0
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("need at least one sample")
        if not self.r_min < self.r_max:
            raise ConfigurationError(f"need r_min < r_max, got {self.r_min} >= {self.r_max}")
        if self.jitter < 0:
            raise ConfigurationError("jitter must be non-negative")


def generate_spiral(spec: SpiralSpec):
    """t ~ U(0, 2*pi), r = r_min + (r_max - r_min) t / (2*pi), plus optional
    isotropic Gaussian jitter."""
    rng = np.random.default_rng(spec.seed)
    t = rng.uniform(0.0, 2 * np.pi, size=spec.n)
    r = spec.r_min + (spec.r_max - spec.r_min) * t / (2 * np.pi)
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    if spec.jitter > 0:
        pts = pts + rng.normal(0.0, spec.jitter, size=pts.shape)
    return pts


@dataclass(frozen=True)
class AffineNormalizer:
    """Coordinatewise map x -> (x - lo) / (hi - lo); lo/hi carry the margin."""

    lo: np.ndarray
    hi: np.ndarray

    def forward(self, points):
        points = np.asarray(points, dtype=np.float64)
        return (points - self.lo) / (self.hi - self.lo)

    def inverse(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points * (self.hi - self.lo) + self.lo

    @property
    def d(self):
        return len(self.lo)


def fit_normalizer(points, margin=0.01) -> AffineNormalizer:
    """Fit bounds over the data with a relative margin on each side."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mins = points.min(axis=0)
    maxs = points.max(axis=0)
    span = maxs - mins
    degenerate = np.nonzero(span <= 0)[0]
    if degenerate.size:
        raise ConfigurationError(
            f"coordinate {int(degenerate[0])} is constant; cannot normalize"
        )
    lo = mins - margin * span
    hi = maxs + margin * span
    lo.setflags(write=False)
    hi.setflags(write=False)
    return AffineNormalizer(lo=lo, hi=hi)


def add_gaussian_noise(values, sigma, seed):
    """i.i.d. N(0, sigma^2) added per coordinate/pixel; values not clamped."""
    values = np.asarray(values, dtype=np.float64)
    if sigma < 0:
        raise ConfigurationError("sigma must be non-negative")
    if sigma == 0:
        return values.copy()
    rng = np.random.default_rng(seed)
    return values + rng.normal(0.0, sigma, size=values.shape)


def synthetic_image(height, width, seed=0):
    """Deterministic piecewise-smooth test image in [0,1].

    Smooth illumination gradient plus a few constant-intensity shapes with
    sharp edges: a reasonable stand-in for a natural grayscale photo when
    exercising the patch pipeline.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width]
    yy = y / max(height - 1, 1)
    xx = x / max(width - 1, 1)
    img = 0.35 + 0.3 * xx + 0.15 * np.sin(2 * np.pi * yy)
    for _ in range(6):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        radius = rng.uniform(0.05, 0.2)
        level = rng.uniform(0.1, 0.9)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < radius**2
        img[mask] = level
    for _ in range(3):
        r0, c0 = rng.uniform(0.0, 0.7, size=2)
        h, w = rng.uniform(0.1, 0.3, size=2)
        level = rng.uniform(0.1, 0.9)
        mask = (yy >= r0) & (yy < r0 + h) & (xx >= c0) & (xx < c0 + w)
        img[mask] = level
    return np.clip(img, 0.0, 1.0)
