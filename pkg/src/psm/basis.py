"""Chebyshev and Lagrange bases, the transform between them, and surrogates.

A surrogate is a polynomial of maximum degree n per coordinate, stored
either as Chebyshev coefficients (reference coordinates of its box) or as
Lagrange coefficients, which are simply its values on the Legendre grid.
Lagrange evaluation uses the barycentric form throughout; the defining
product formula is only worth using as a cross-check at tiny degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache, reduce

import numpy as np
import scipy.linalg

from .grid import TensorGrid, legendre_rule_1d, tensor_grid, unit_box
from .tensor_ops import apply_per_axis, contract_points, kron_dense


@lru_cache(maxsize=64)
def _cached_rule(n: int):
    return legendre_rule_1d(n)


@lru_cache(maxsize=64)
def barycentric_weights(n: int) -> np.ndarray:
    """Barycentric weights of the degree-n Legendre nodes, max-normalised.

    Computed in log space so large n stays finite; only ratios matter.
    """
    x = _cached_rule(n).nodes
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    log_w = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    return sign * np.exp(log_w - log_w.max())


def chebyshev_vandermonde_1d(n: int, t: np.ndarray) -> np.ndarray:
    """Matrix (len(t), n+1) of T_k(t) on reference coordinates.

    cos(k arccos t) inside [-1, 1]; three-term recurrence outside.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.size, n + 1))
    inside = np.abs(t) <= 1.0
    if np.any(inside):
        theta = np.arccos(np.clip(t[inside], -1.0, 1.0))
        out[inside] = np.cos(np.outer(theta, np.arange(n + 1)))
    if np.any(~inside):
        s = t[~inside]
        block = np.empty((s.size, n + 1))
        block[:, 0] = 1.0
        if n >= 1:
            block[:, 1] = s
        for k in range(1, n):
            block[:, k + 1] = 2.0 * s * block[:, k] - block[:, k - 1]
        out[~inside] = block
    return out


def lagrange_matrix_1d(n: int, t: np.ndarray) -> np.ndarray:
    """Matrix (len(t), n+1) of the cardinal polynomials L_j(t), barycentric.

    Rows at points coinciding with a node reduce to the exact unit vector.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = _cached_rule(n).nodes
    w = barycentric_weights(n)
    diff = t[:, None] - x[None, :]
    exact_row, exact_col = np.nonzero(diff == 0.0)
    diff[exact_row, exact_col] = 1.0
    ratio = w[None, :] / diff
    out = ratio / ratio.sum(axis=1, keepdims=True)
    if exact_row.size:
        out[exact_row, :] = 0.0
        out[exact_row, exact_col] = 1.0
    return out


def _to_reference(x: np.ndarray, box: np.ndarray) -> np.ndarray:
    centers = 0.5 * (box[:, 0] + box[:, 1])
    spans = 0.5 * (box[:, 1] - box[:, 0])
    return (x - centers[None, :]) / spans[None, :]


def chebyshev_eval(alpha, x, box=None) -> float | np.ndarray:
    """Evaluate the tensor Chebyshev polynomial T_alpha at point(s) x.

    x is mapped affinely from the box into [-1,1]^m first, so that
    T_alpha(cos t) = prod_i cos(alpha_i t_i) holds in reference coordinates.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    m = alpha.size
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if box is None:
        box = unit_box(m)
    ref = _to_reference(pts, np.asarray(box, dtype=float))
    vals = np.ones(pts.shape[0])
    for i in range(m):
        vals = vals * chebyshev_vandermonde_1d(int(alpha[i]), ref[:, i])[:, -1]
    return vals if np.asarray(x).ndim == 2 else float(vals[0])


def lagrange_eval(alpha, grid: TensorGrid, x) -> float | np.ndarray:
    """Evaluate the cardinal polynomial L_alpha of a grid at point(s) x."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    ref = _to_reference(pts, grid.box)
    vals = np.ones(pts.shape[0])
    for i in range(grid.m):
        vals = vals * lagrange_matrix_1d(grid.n, ref[:, i])[:, int(alpha[i])]
    return vals if np.asarray(x).ndim == 2 else float(vals[0])


@dataclass(frozen=True)
class BasisTransform:
    """Change of basis between Chebyshev coefficients and grid values.

    ``factor`` is the 1D matrix (T_k(p_i))_{i,k}; the full transform is its
    m-fold Kronecker power, applied axis by axis.  to_chebyshev solves with
    a cached LU factorisation of the 1D factor.
    """

    m: int
    n: int
    factor: np.ndarray = field(repr=False)
    _lu: tuple = field(repr=False)

    @property
    def shape(self) -> tuple:
        return (self.n + 1,) * self.m

    def chebyshev_to_values(self, theta: np.ndarray) -> np.ndarray:
        return apply_per_axis(np.asarray(theta, dtype=float), [self.factor] * self.m, self.shape)

    def values_to_chebyshev(self, values: np.ndarray) -> np.ndarray:
        out = np.asarray(values, dtype=float)
        inv = _LuSolveOperator(self._lu, self.n + 1)
        return apply_per_axis(out, [inv] * self.m, self.shape)

    @property
    def to_lagrange(self) -> np.ndarray:
        """Dense matrix mapping Chebyshev coefficients to grid values."""
        return kron_dense([self.factor] * self.m)

    @property
    def to_chebyshev(self) -> np.ndarray:
        """Dense inverse transform (use only at modest n)."""
        inv_factor = scipy.linalg.lu_solve(self._lu, np.eye(self.n + 1))
        return kron_dense([inv_factor] * self.m)


class _LuSolveOperator:
    """Duck-typed stand-in for a matrix: matmul solves with the LU factor."""

    def __init__(self, lu, size):
        self._lu = lu
        self.shape = (size, size)

    def __matmul__(self, other):
        return scipy.linalg.lu_solve(self._lu, other)


@lru_cache(maxsize=32)
def _transform_factor(n: int):
    rule = _cached_rule(n)
    factor = chebyshev_vandermonde_1d(n, rule.nodes)
    lu = scipy.linalg.lu_factor(factor)
    return factor, lu


def basis_transform(m: int, n: int) -> BasisTransform:
    """Transform between Chebyshev and Lagrange representations on P_{m,n}."""
    factor, lu = _transform_factor(n)
    return BasisTransform(m=m, n=n, factor=factor, _lu=lu)


@dataclass(frozen=True)
class Surrogate:
    """Polynomial surrogate: coefficient vector, basis tag and domain box.

    basis is "lagrange" (coefficients are grid values) or "chebyshev"
    (coefficients of the tensor Chebyshev expansion in reference
    coordinates of the box).
    """

    m: int
    n: int
    basis: str
    coeffs: np.ndarray = field(repr=False)
    box: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.basis not in ("lagrange", "chebyshev"):
            raise ValueError(f"unknown basis tag {self.basis!r}")
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "box", np.asarray(self.box, dtype=float))
        if self.coeffs.shape != ((self.n + 1) ** self.m,):
            raise ValueError(
                f"expected {(self.n + 1) ** self.m} coefficients, got {self.coeffs.shape}"
            )

    @property
    def shape(self) -> tuple:
        return (self.n + 1,) * self.m

    def to_chebyshev(self) -> "Surrogate":
        if self.basis == "chebyshev":
            return self
        theta = basis_transform(self.m, self.n).values_to_chebyshev(self.coeffs)
        return replace(self, basis="chebyshev", coeffs=theta)

    def to_lagrange(self) -> "Surrogate":
        if self.basis == "lagrange":
            return self
        vals = basis_transform(self.m, self.n).chebyshev_to_values(self.coeffs)
        return replace(self, basis="lagrange", coeffs=vals)

    def __call__(self, x) -> np.ndarray:
        """Evaluate at points x of shape (P, m) (or a single m-vector)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        ref = _to_reference(pts, self.box)
        if self.basis == "lagrange":
            mats = [lagrange_matrix_1d(self.n, ref[:, i]) for i in range(self.m)]
        else:
            mats = [chebyshev_vandermonde_1d(self.n, ref[:, i]) for i in range(self.m)]
        vals = contract_points(self.coeffs, mats, self.shape)
        return vals if np.asarray(x).ndim == 2 else float(vals[0])

    def eval_tensor(self, axes_points) -> np.ndarray:
        """Evaluate on a tensor product of per-axis point lists (flat, fast)."""
        mats = []
        for i, pts in enumerate(axes_points):
            a, b = self.box[i]
            ref = (np.asarray(pts, dtype=float) - 0.5 * (a + b)) / (0.5 * (b - a))
            if self.basis == "lagrange":
                mats.append(lagrange_matrix_1d(self.n, ref))
            else:
                mats.append(chebyshev_vandermonde_1d(self.n, ref))
        return apply_per_axis(self.coeffs, mats, self.shape)


def interpolate(values: np.ndarray, grid: TensorGrid) -> Surrogate:
    """Surrogate interpolating sampled values on the grid (Lagrange basis)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(grid),):
        raise ValueError(f"expected {len(grid)} samples, got shape {values.shape}")
    return Surrogate(m=grid.m, n=grid.n, basis="lagrange",
                     coeffs=values.copy(), box=grid.box)


def l2_project(f, grid: TensorGrid) -> Surrogate:
    """Discrete L2-projection of a function handle onto the grid's space.

    Coefficient of L_alpha is <f, L_alpha> / w_alpha with the inner product
    taken by an oversampled Gauss rule exact for the products involved.
    """
    fine = tensor_grid(grid.m, grid.n + 1, grid.box)
    samples = fine.sample(f)
    ref = fine.rule.nodes
    eval_mat = lagrange_matrix_1d(grid.n, ref)  # (n+2, n+1)
    mats = []
    for i in range(grid.m):
        w_fine = fine.axis_weights(i)
        mats.append(eval_mat.T * w_fine[None, :])
    pairings = apply_per_axis(samples, mats, fine.shape)
    return Surrogate(m=grid.m, n=grid.n, basis="lagrange",
                     coeffs=pairings / grid.weights, box=grid.box)
