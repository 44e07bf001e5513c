"""Sketch-matching training loops.

Three modes share one loss family ||B alpha mu(grid) - zhat||^2:

* ``naive``     -- fresh random grid each iteration, gradient of the
                   single-grid objective (biased by an O(1/P) term),
* ``unbiased``  -- two-grid direction whose expectation is exactly the
                   gradient of the ideal sketch-matching objective; the
                   second grid is recycled from the previous iteration,
* ``fixed_grid``-- deterministic descent on one regular lattice.

The gradient never flows through the least-squares normalizer alpha: it is
computed first, then treated as a constant inside the loss.

The unbiased direction carries the factor 2 of the true gradient
d/dtheta ||S mu - z||^2 = 2 Re<S dmu, S mu - z>, so its Monte Carlo mean
matches the exact gradient with no rescaling.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateDensityError,
    DivergenceError,
    FingerprintMismatchError,
    IndependenceError,
)
from .sketch import DiscretizedOperator, Grid, regular_grid, sample_grid

_SEED_BOUND = 2**63


# step rules ------------------------------------------------------------


@dataclass(frozen=True)
class ConstantStep:
    tau: float


@dataclass(frozen=True)
class DiminishingStep:
    """tau_k = tau0 / k: the partial sums diverge while their squares converge."""

    tau0: float


@dataclass(frozen=True)
class AdamStep:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def step_schedule(rule, k):
    """Step size at iteration k >= 1 (Adam reports its nominal rate)."""
    if k < 1:
        raise ConfigurationError(f"iterations are 1-based, got k={k}")
    if isinstance(rule, ConstantStep):
        return rule.tau
    if isinstance(rule, DiminishingStep):
        return rule.tau0 / k
    if isinstance(rule, AdamStep):
        return rule.lr
    raise ConfigurationError(f"unknown step rule {rule!r}")


class _AdamState:
    """First/second moment accumulator turning raw gradients into steps."""

    def __init__(self, rule: AdamStep, size):
        self.rule = rule
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad):
        r = self.rule
        self.t += 1
        self.m = r.beta1 * self.m + (1 - r.beta1) * grad
        self.v = r.beta2 * self.v + (1 - r.beta2) * grad * grad
        mhat = self.m / (1 - r.beta1**self.t)
        vhat = self.v / (1 - r.beta2**self.t)
        return r.lr * mhat / (np.sqrt(vhat) + r.eps)


# loss pieces -------------------------------------------------------------


def alpha_least_squares(Bmu, zhat):
    """Scalar alpha = |<B mu, zhat>| / ||B mu||^2, exactly as written."""
    Bmu = np.asarray(Bmu, dtype=np.complex128)
    zhat = np.asarray(zhat, dtype=np.complex128)
    denom = np.real(np.vdot(Bmu, Bmu))
    if denom < 1e-300:
        raise DegenerateDensityError("density sketch has zero norm; alpha undefined")
    return float(np.abs(np.sum(Bmu * np.conj(zhat))) / denom)


def naive_loss_and_gradient(density, model, grid, zhat, alpha, freqset, op=None):
    """Single-grid loss H1 = ||alpha * B_p mu(p) - zhat||^2 and its gradient."""
    if op is None:
        op = DiscretizedOperator(freqset, grid)
    values, ctx = density.eval_batch(model, grid)
    residual = alpha * op.apply(values) - zhat
    loss = float(np.real(np.vdot(residual, residual)))
    weights = 2.0 * alpha * op.backproject(residual)
    return loss, density.param_gradient(ctx, weights)


def unbiased_direction(
    density, model, grid_p, grid_q, alpha, zhat, freqset, allow_shared_seed=False,
    op_p=None, op_q=None,
):
    """Two-grid direction D with E[D] = grad ||S mu - zhat||^2 when alpha = 1.

    The anchor l_q = alpha * B_q mu(q) - zhat is held fixed (no gradient
    flows through it); D is the gradient of 2 Re<B_p alpha mu(p), l_q>.
    """
    if grid_p.seed == grid_q.seed:
        if not allow_shared_seed:
            raise IndependenceError(
                f"grids share seed {grid_p.seed}; the direction needs independent grids"
            )
        warnings.warn("unbiased direction computed from grids with a shared seed")
    if op_p is None:
        op_p = DiscretizedOperator(freqset, grid_p)
    if op_q is None:
        op_q = DiscretizedOperator(freqset, grid_q)
    values_q, _ = density.eval_batch(model, grid_q)
    l_q = alpha * op_q.apply(values_q) - zhat
    _, ctx = density.eval_batch(model, grid_p)
    weights = 2.0 * alpha * op_p.backproject(l_q)
    return density.param_gradient(ctx, weights)


def monitor_loss(density, model, eval_grid, zhat, alpha, freqset, op=None):
    """Proxy training objective on a fixed, larger evaluation grid."""
    if op is None:
        op = DiscretizedOperator(freqset, eval_grid)
    values, _ = density.eval_batch(model, eval_grid)
    residual = alpha * op.apply(values) - zhat
    return float(np.real(np.vdot(residual, residual)))


# training loop -----------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "naive"  # naive | unbiased | fixed_grid
    iters: int = 1000
    grid_size: int = 1000
    alpha: object = "auto"  # "auto" or a positive float
    step_rule: object = field(default_factory=lambda: ConstantStep(1.0))
    grid_seed: int = 0
    init_seed: int = 0
    eval_grid_size: int = 0  # 0 -> 4 * grid_size
    eval_seed: int = 12345
    checkpoint_interval: int = 0  # 0 -> max(1, iters // 100)

    def __post_init__(self):
        if self.algorithm not in ("naive", "unbiased", "fixed_grid"):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.iters < 0 or self.grid_size < 1:
            raise ConfigurationError("need iters >= 0 and grid_size >= 1")
        if self.alpha != "auto":
            if not float(self.alpha) > 0:
                raise ConfigurationError(f"fixed alpha must be positive, got {self.alpha}")
        if self.algorithm == "unbiased" and self.alpha == "auto":
            raise ConfigurationError(
                "the unbiased mode needs a fixed alpha (auto-normalization clips)"
            )


@dataclass
class TrainHistory:
    """Checkpoint records: (iteration, monitored loss, alpha, step, seconds)."""

    records: list = field(default_factory=list)

    def append(self, iteration, loss, alpha, step, seconds):
        if self.records and iteration <= self.records[-1][0]:
            raise ConfigurationError("history iterations must be increasing")
        self.records.append((int(iteration), float(loss), float(alpha), float(step), float(seconds)))

    def to_csv(self, path):
        lines = ["iter,loss,alpha,step,seconds"]
        for it, loss, alpha, step, seconds in self.records:
            lines.append(f"{it},{loss:.17g},{alpha:.17g},{step:.17g},{seconds:.6f}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def train(density, model, config: TrainConfig, zhat, freqset):
    """Run CL-SGD from the given initial model; returns (model, history).

    Deterministic under (grid_seed, eval_seed) and the initial model: the
    per-iteration grids are seeded from one generator, and every reduction
    is a fixed-order matrix product.
    """
    zhat = np.asarray(zhat, dtype=np.complex128)
    if zhat.shape != (freqset.m,):
        raise FingerprintMismatchError(
            f"sketch has {zhat.shape} components but the frequency set has m={freqset.m}"
        )
    d = freqset.d
    K = config.iters
    interval = config.checkpoint_interval or max(1, K // 100)
    eval_size = config.eval_grid_size or 4 * config.grid_size
    eval_grid = sample_grid(eval_size, d, config.eval_seed)
    eval_op = DiscretizedOperator(freqset, eval_grid)
    seed_rng = np.random.default_rng(config.grid_seed)

    fixed_alpha = None if config.alpha == "auto" else float(config.alpha)
    adam = None
    if isinstance(config.step_rule, AdamStep):
        adam = _AdamState(config.step_rule, density.params(model).size)

    history = TrainHistory()
    t0 = time.perf_counter()

    def checkpoint(k, alpha, step):
        loss = monitor_loss(density, model, eval_grid, zhat, alpha, freqset, op=eval_op)
        history.append(k, loss, alpha, step, time.perf_counter() - t0)
        if not np.isfinite(loss):
            raise DivergenceError(f"monitored loss diverged at iteration {k}", iteration=k)

    checkpoint(0, fixed_alpha if fixed_alpha is not None else 1.0, 0.0)

    if config.algorithm == "fixed_grid":
        grid = regular_grid(config.grid_size, d)
        op = DiscretizedOperator(freqset, grid)
    grid_q = op_q = None

    for k in range(1, K + 1):
        if config.algorithm != "fixed_grid":
            grid = sample_grid(config.grid_size, d, int(seed_rng.integers(_SEED_BOUND)))
            op = DiscretizedOperator(freqset, grid)

        if config.algorithm == "unbiased":
            if grid_q is None:
                grid_q = sample_grid(config.grid_size, d, int(seed_rng.integers(_SEED_BOUND)))
                op_q = DiscretizedOperator(freqset, grid_q)
            alpha = fixed_alpha
            grad = unbiased_direction(
                density, model, grid, grid_q, alpha, zhat, freqset, op_p=op, op_q=op_q
            )
            grid_q, op_q = grid, op
        else:
            values, ctx = density.eval_batch(model, grid)
            Bmu = op.apply(values)
            alpha = fixed_alpha if fixed_alpha is not None else alpha_least_squares(Bmu, zhat)
            residual = alpha * Bmu - zhat
            weights = 2.0 * alpha * op.backproject(residual)
            grad = density.param_gradient(ctx, weights)

        if adam is not None:
            update = adam.step(grad)
            tau = config.step_rule.lr
        else:
            tau = step_schedule(config.step_rule, k)
            update = tau * grad
        params = density.params(model) - update
        if not np.all(np.isfinite(params)):
            raise DivergenceError(f"parameters diverged at iteration {k}", iteration=k)
        model = density.replace(model, params)

        if k % interval == 0 or k == K:
            checkpoint(k, alpha, tau)

    return model, history
