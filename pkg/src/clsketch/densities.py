"""Parametric density models trained by sketch matching.

A density model exposes a tiny evaluation contract:

* ``eval_batch(model, grid)`` returns the density values on the grid plus a
  retained evaluation context,
* ``param_gradient(ctx, weights)`` turns per-point weights w_i into the
  gradient of sum_i w_i mu(p_i) with respect to the model parameters,
* ``params`` / ``replace`` give the optimizer a flat parameter view.

``ReluDensity`` is the model of interest: mu(x) = exp(-||f(x)||^2) for a
ReLU network f, so values always lie in (0, 1].  ``CosineParamDensity`` is a
one-parameter density with a closed-form sketch, used to validate the
stochastic directions against exact expectations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ShapeError
from .sketch import unit_cube_fourier


class ReluDensity:
    """mu(x) = exp(-||f(x)||^2) with f a ReluNet; model objects are nets."""

    def eval_batch(self, net, grid):
        f = nn.forward_batch(net, grid.points)
        values = np.exp(-np.einsum("ij,ij->i", f, f))
        return values, (net, grid.points, f, values)

    def param_gradient(self, ctx, weights):
        net, points, f, values = ctx
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(points),):
            raise ShapeError(f"expected {len(points)} weights, got shape {weights.shape}")
        # d mu / d f_j = -2 f_j mu at each point
        cotangents = (-2.0 * weights * values)[:, None] * f
        return nn.param_gradient_batch(net, points, cotangents)

    def params(self, net):
        return net.params

    def replace(self, net, params):
        return net.with_params(params)


@dataclass(frozen=True)
class CosineParamDensity:
    """mu_theta(x) = 1 + theta_1 * cos(2*pi*<k, x>), theta_1 a free scalar.

    Linear in its single parameter, with closed-form sketch and sketch
    gradient, so exact loss gradients are available for testing.  Model
    objects are length-1 float arrays.
    """

    k: tuple

    def _cosines(self, points):
        kvec = np.asarray(self.k, dtype=np.float64)
        return np.cos(2 * np.pi * (points @ kvec))

    def eval_batch(self, model, grid):
        c = self._cosines(grid.points)
        values = 1.0 + float(model[0]) * c
        return values, c

    def param_gradient(self, ctx, weights):
        return np.array([np.dot(np.asarray(weights, dtype=np.float64), ctx)])

    def params(self, model):
        return np.asarray(model, dtype=np.float64)

    def replace(self, model, params):
        return np.asarray(params, dtype=np.float64)

    # closed forms ------------------------------------------------------

    def sketch(self, freqset, model):
        """Exact S mu_theta, componentwise."""
        return unit_cube_fourier(freqset.freqs) + float(model[0]) * self.sketch_gradient(freqset)

    def sketch_gradient(self, freqset):
        """Exact S (d mu / d theta_1); independent of theta_1."""
        k2pi = 2 * np.pi * np.asarray(self.k, dtype=np.float64)
        w = freqset.freqs
        return 0.5 * (unit_cube_fourier(w - k2pi) + unit_cube_fourier(w + k2pi))

    def loss_gradient(self, freqset, model, zhat):
        """Exact gradient of ||S mu_theta - zhat||^2 w.r.t. theta_1."""
        smu = self.sketch(freqset, model)
        dsmu = self.sketch_gradient(freqset)
        return np.array([2.0 * np.real(np.sum(dsmu * np.conj(smu - zhat)))])

    def self_l2_inner(self, model):
        """Analytic <d mu / d theta, mu_theta> on the unit cube."""
        return 0.5 * float(model[0])
