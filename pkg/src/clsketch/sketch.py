"""Random-Fourier sketching on the unit hypercube.

A dataset normalized to [0,1]^d is summarized by the average of the complex
moments exp(-j<w_l, x>) over m Gaussian frequencies w_l.  The same moment
matrix, evaluated on a random point grid and divided by the grid size, gives
the randomly discretized forward operator used by the training algorithms.

Complex inner products follow the convention <a, b> = sum_l a_l conj(b_l).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FingerprintMismatchError, ShapeError

# Largest m*P for which the dense m-by-P moment matrix may be materialized.
DENSE_BUDGET = 1 << 26


@dataclass(frozen=True)
class FrequencySet:
    """m Gaussian random frequencies in R^d, reproducible from the seed."""

    freqs: np.ndarray  # (m, d)
    scale: float
    seed: int

    @property
    def m(self):
        return self.freqs.shape[0]

    @property
    def d(self):
        return self.freqs.shape[1]

    def fingerprint(self):
        return (self.m, self.d, float(self.scale), int(self.seed))


def sample_frequencies(m, d, scale, seed) -> FrequencySet:
    """Draw m i.i.d. N(0, scale^2 I_d) frequency vectors."""
    if m < 1 or d < 1:
        raise ConfigurationError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    if not scale > 0:
        raise ConfigurationError(f"frequency scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    freqs = rng.normal(0.0, scale, size=(m, d))
    return FrequencySet(freqs=freqs, scale=float(scale), seed=int(seed))


def suggest_frequency_scale(points, seed=0, target=np.pi / 2, n_pairs=1000):
    """Heuristic scale: median |<w, x - x'>| over random pairs ~= target.

    For w = scale * g with g standard normal, the projection scales
    linearly, so the scale is target / median(|<g, x - x'>|).  This is a
    rule of thumb, not a tuned value.
    """
    points = np.asarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    n, d = points.shape
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n, size=n_pairs)
    delta = points[i] - points[j]
    g = rng.normal(size=(n_pairs, d))
    proj = np.abs(np.einsum("ij,ij->i", g, delta))
    med = np.median(proj)
    if med <= 0:
        raise ConfigurationError("degenerate data: all sampled pairs coincide")
    return float(target / med)


class SketchState:
    """Streaming single-writer accumulator of the empirical sketch.

    Parallelize by sharding the stream into independent states and merging;
    merging is exact because the sketch is a plain average.
    """

    def __init__(self, freqset: FrequencySet):
        self.fingerprint = freqset.fingerprint()
        self._freqs = freqset.freqs
        self.accum = np.zeros(freqset.m, dtype=np.complex128)
        self.count = 0

    def update(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self._freqs.shape[1],):
            raise ShapeError(f"sample shape {x.shape}, expected ({self._freqs.shape[1]},)")
        self.accum += np.exp(-1j * (self._freqs @ x))
        self.count += 1
        return self

    def update_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self._freqs.shape[1]:
            raise ShapeError(f"batch shape {xs.shape}, expected (n, {self._freqs.shape[1]})")
        # chunk so the moment matrix stays within the dense budget; real
        # cos/sin avoids the (much slower) complex exponential
        step = max(1, DENSE_BUDGET // self._freqs.shape[0])
        for lo in range(0, len(xs), step):
            phase = self._freqs @ xs[lo : lo + step].T
            self.accum += np.cos(phase).sum(axis=1) - 1j * np.sin(phase).sum(axis=1)
        self.count += len(xs)
        return self

    def finalize(self):
        if self.count == 0:
            raise ConfigurationError("cannot finalize an empty sketch")
        return self.accum / self.count


def merge_sketch_states(s1: SketchState, s2: SketchState) -> SketchState:
    """Combine two shard accumulators built from the same frequency set."""
    if s1.fingerprint != s2.fingerprint:
        raise FingerprintMismatchError(
            f"incompatible frequency sets: {s1.fingerprint} vs {s2.fingerprint}"
        )
    out = SketchState.__new__(SketchState)
    out.fingerprint = s1.fingerprint
    out._freqs = s1._freqs
    out.accum = s1.accum + s2.accum
    out.count = s1.count + s2.count
    return out


def sketch_dataset(freqset: FrequencySet, points) -> np.ndarray:
    """One-pass empirical sketch of a full in-memory dataset."""
    state = SketchState(freqset).update_batch(np.asarray(points, dtype=np.float64))
    return state.finalize()


@dataclass(frozen=True)
class Grid:
    """P uniform random points on [0,1]^d."""

    points: np.ndarray  # (P, d)
    seed: int = 0

    @property
    def P(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


def sample_grid(P, d, seed) -> Grid:
    if P < 1:
        raise ConfigurationError(f"grid size must be >= 1, got {P}")
    rng = np.random.default_rng(seed)
    return Grid(points=rng.random((P, d)), seed=int(seed))


def regular_grid(P, d) -> Grid:
    """Deterministic lattice of cell centers with about P points.

    The per-axis resolution is round(P ** (1/d)); the actual point count is
    that resolution to the power d.
    """
    g = max(1, round(P ** (1.0 / d)))
    axes = (np.arange(g) + 0.5) / g
    mesh = np.meshgrid(*([axes] * d), indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=1)
    return Grid(points=pts, seed=-1)


class DiscretizedOperator:
    """The forward map B_p and its adjoint on a fixed (freqs, grid) pair.

    The moment matrix exp(-j phase) is held as its real and imaginary parts
    (cos(phase) and -sin(phase)) so that both directions reduce to real
    matrix products -- the complex exponential is roughly 3x slower to build
    and this constructor sits inside the training loop.  The matrices are
    cached when they fit the memory budget, otherwise both directions
    stream over grid chunks.
    """

    def __init__(self, freqset: FrequencySet, grid: Grid, budget=DENSE_BUDGET):
        if freqset.d != grid.d:
            raise ShapeError(f"frequency dim {freqset.d} != grid dim {grid.d}")
        self.freqs = freqset.freqs
        self.points = grid.points
        self.P = grid.P
        self.m = freqset.m
        self._cos = self._sin = None
        if self.m * self.P <= budget:
            phase = self.freqs @ self.points.T
            self._cos = np.cos(phase)
            self._sin = np.sin(phase)

    @property
    def _matrix(self):
        """Dense complex moment matrix, or None when streaming."""
        if self._cos is None:
            return None
        return self._cos - 1j * self._sin

    def _chunks(self):
        step = max(1, DENSE_BUDGET // self.m)
        for lo in range(0, self.P, step):
            phase = self.freqs @ self.points[lo : lo + step].T
            yield lo, np.cos(phase), np.sin(phase)

    def apply(self, values):
        """(B_p v)_l = (1/P) sum_i exp(-j<w_l, p_i>) v_i."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.P,):
            raise ShapeError(f"expected {self.P} values, got shape {values.shape}")
        if self._cos is not None:
            return (self._cos @ values - 1j * (self._sin @ values)) / self.P
        re = np.zeros(self.m)
        im = np.zeros(self.m)
        for lo, c, s in self._chunks():
            chunk = values[lo : lo + c.shape[1]]
            re += c @ chunk
            im += s @ chunk
        return (re - 1j * im) / self.P

    def backproject(self, r):
        """Adjoint direction: w_i = (1/P) sum_l Re(exp(+j<w_l, p_i>) r_l).

        Satisfies Re<B_p v, r> = <v, backproject(r)> for real v, which is
        exactly the per-point weight the chain rule needs for gradients of
        ||B_p v - z||^2 style objectives.
        """
        r = np.asarray(r, dtype=np.complex128)
        if r.shape != (self.m,):
            raise ShapeError(f"expected {self.m} residual components, got shape {r.shape}")
        if self._cos is not None:
            return (r.real @ self._cos - r.imag @ self._sin) / self.P
        out = np.empty(self.P)
        for lo, c, s in self._chunks():
            out[lo : lo + c.shape[1]] = r.real @ c - r.imag @ s
        return out / self.P


def apply_discretized_operator(freqset, grid, values):
    """One-shot B_p application (streaming, matrix never kept)."""
    return DiscretizedOperator(freqset, grid).apply(values)


def backproject(freqset, grid, r):
    """One-shot adjoint application."""
    return DiscretizedOperator(freqset, grid).backproject(r)


@dataclass(frozen=True)
class OracleCosineDensity:
    """Test density 1 + a*cos(2*pi*<k, x>) on [0,1]^d with closed-form sketch."""

    k: tuple  # integer wave vector, not all zero
    a: float  # amplitude in (0, 1)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.int64)
        object.__setattr__(self, "k", tuple(int(v) for v in k))
        if not np.any(k):
            raise ConfigurationError("wave vector must be nonzero")
        if not 0 <= self.a < 1:
            raise ConfigurationError(f"amplitude must lie in [0,1), got {self.a}")

    @property
    def d(self):
        return len(self.k)

    def eval(self, points):
        points = np.asarray(points, dtype=np.float64)
        return 1.0 + self.a * np.cos(2 * np.pi * (points @ np.asarray(self.k, dtype=np.float64)))


def unit_cube_fourier(omega):
    """F(w) = prod_j (1 - exp(-j w_j)) / (j w_j), the transform of U([0,1]^d).

    Each factor tends to 1 as w_j -> 0; evaluated stably via sinc:
    (1 - e^{-jw}) / (jw) = e^{-jw/2} * sinc(w / (2*pi)).
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=np.float64))
    factors = np.exp(-0.5j * omega) * np.sinc(omega / (2 * np.pi))
    out = factors.prod(axis=1)
    return out


def oracle_sketch_cosine(freqset: FrequencySet, density: OracleCosineDensity):
    """Exact sketch S mu of a cosine density, componentwise in closed form."""
    if freqset.d != density.d:
        raise ShapeError(f"frequency dim {freqset.d} != density dim {density.d}")
    k2pi = 2 * np.pi * np.asarray(density.k, dtype=np.float64)
    w = freqset.freqs
    return unit_cube_fourier(w) + 0.5 * density.a * (
        unit_cube_fourier(w - k2pi) + unit_cube_fourier(w + k2pi)
    )


def cosine_l2_inner(d1: OracleCosineDensity, d2: OracleCosineDensity):
    """Analytic L2([0,1]^d) inner product of two cosine densities."""
    if d1.d != d2.d:
        raise ShapeError("densities live on different cubes")
    k1 = np.asarray(d1.k)
    k2 = np.asarray(d2.k)
    cross = 0.0
    if np.array_equal(k1, k2) or np.array_equal(k1, -k2):
        cross = 0.5 * d1.a * d2.a
    return 1.0 + cross
