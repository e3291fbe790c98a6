"""Discrete Sobolev inner products and norms on grid-value vectors.

A metric wraps one of the weight operators from :mod:`psm.operators`; the
inner product of two sampled polynomials is then a plain weighted pairing
of their value vectors.  Positive orders reproduce the continuous H^k
inner product exactly on the polynomial space, negative orders realise the
dual pairing through the inverse weight, and the starred variants swap the
roles of derivative and adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import OperatorCache, SobolevWeight, SquaredWeight


class NotPositiveDefiniteError(RuntimeError):
    """The quadratic form returned a materially negative value."""


@dataclass(frozen=True)
class SobolevMetric:
    """Inner-product metric of signed order and variant on one grid."""

    m: int
    n: int
    order: int
    variant: str
    weight: SobolevWeight | SquaredWeight = field(repr=False)

    @property
    def size(self) -> int:
        return self.weight.size


def sobolev_metric(cache: OperatorCache, order: int, variant: str = "plain") -> SobolevMetric:
    """Metric of the discrete H^order inner product on the cache's grid."""
    weight = cache.sobolev_weight(order, variant)
    return SobolevMetric(m=cache.m, n=cache.n, order=order, variant=variant, weight=weight)


def inner(metric: SobolevMetric, f_vals: np.ndarray, g_vals: np.ndarray) -> float:
    """Weighted pairing f^T M g of two grid-value vectors."""
    f_vals = np.asarray(f_vals, dtype=float)
    g_vals = np.asarray(g_vals, dtype=float)
    if f_vals.shape != (metric.size,) or g_vals.shape != (metric.size,):
        raise ValueError(
            f"expected vectors of length {metric.size}, got {f_vals.shape} and {g_vals.shape}"
        )
    return float(f_vals @ metric.weight.apply(g_vals))


def norm(metric: SobolevMetric, f_vals: np.ndarray) -> float:
    """Metric norm of a grid-value vector (sqrt of the quadratic form)."""
    value = inner(metric, f_vals, f_vals)
    if value < -1e-12:
        raise NotPositiveDefiniteError(
            f"quadratic form returned {value}; weight operator is not PSD"
        )
    return float(np.sqrt(max(value, 0.0)))


def dual_testfunction_form(cache: OperatorCache, f_vals: np.ndarray, beta) -> float:
    """Sum over alpha of <f, D_beta L_alpha>^2 / w_alpha.

    Computed through transpose products: the pairing vector is
    D_beta^T W f, and the form is its W^{-1}-weighted square, which equals
    the L2 norm of the adjoint derivative of f.
    """
    f_vals = np.asarray(f_vals, dtype=float)
    pairings = cache.diff_transpose_apply(beta, cache.weights * f_vals)
    return float(pairings @ (pairings / cache.weights))
