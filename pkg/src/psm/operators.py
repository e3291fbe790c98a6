"""Truncated differential, adjoint, Sobolev-weight and trace operators.

Everything acts on flat vectors of grid values.  The per-coordinate
differentiation matrix is the barycentric spectral one (exact on the
polynomial space); multi-index derivatives apply the 1D matrix power along
each axis without materialising Kronecker products.  Adjoints are taken
with respect to the cubature pairing: D* = W^-1 D^T W, realised per axis
because W is a diagonal tensor product itself.

Sobolev weight operators come in four variants.  With G_k = sum over
|beta|_1 <= k of D_beta^T W D_beta and H_k = sum of D_beta W^-1 D_beta^T:

    order +k, plain    :  G_k
    order +k, starred  :  W H_k W
    order -k, plain    :  W G_k^-1 W
    order -k, starred  :  H_k^-1

All four are symmetric positive definite; k = 0 gives the diagonal W.
Each summand of G_k and H_k is a pure Kronecker product of small 1D
matrices, so the dense assemblies stay cheap even in four dimensions.
Negative orders keep a Cholesky factor instead of a dense inverse.

The trace operator evaluates the degree-n polynomial of the domain grid on
a boundary-face grid of possibly different degree; it is realised by 1D
barycentric evaluation matrices per axis (the Chebyshev-coefficient form
composed with the inverse basis transform gives the same linear map, with
worse conditioning at high degree).
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import blas as scipy_blas

from .basis import barycentric_weights, lagrange_matrix_1d
from .grid import FaceGrid, LegendreRule1D, TensorGrid, boundary_grids, tensor_grid
from .tensor_ops import apply_axis, apply_per_axis, kron_dense


def diff_matrix_1d(rule: LegendreRule1D, interval=(-1.0, 1.0)) -> np.ndarray:
    """Spectral differentiation matrix on the rule's nodes, barycentric form.

    Entry (i, j) is the derivative of the j-th cardinal polynomial at node
    i, scaled by 2/(b-a) for an interval (a, b); row sums vanish exactly.
    """
    x = rule.nodes
    w = barycentric_weights(rule.n)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    mat = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(mat, 0.0)
    np.fill_diagonal(mat, -mat.sum(axis=1))
    a, b = interval
    return mat * (2.0 / (b - a))


def syrk(a: np.ndarray) -> np.ndarray:
    """Full symmetric A^T A using the rank-k BLAS update."""
    a = np.asarray(a, dtype=float, order="F")
    c = scipy_blas.dsyrk(1.0, a, trans=1, lower=0)
    return c + np.triu(c, 1).T


def multi_indices_up_to(m: int, k: int):
    """All beta in N^m with |beta|_1 <= k, zero first."""
    out = []
    for total in range(k + 1):
        for beta in itertools.product(range(total + 1), repeat=m):
            if sum(beta) == total:
                out.append(beta)
    return out


class SobolevWeight:
    """Symmetric positive definite weight operator of one metric variant.

    apply(v) computes M v for flat vectors or dense blocks; half(A) returns
    a matrix R A with M = R^T R, so that quadratic forms A^T M A can be
    accumulated by a single rank-k update.
    """

    def __init__(self, order: int, variant: str, diag=None, dense=None,
                 chol=None, pre_diag=None):
        self.order = order
        self.variant = variant
        self._diag = diag
        self._dense = dense
        self._chol = chol          # upper Cholesky factor R, M_base = R^T R
        self._pre_diag = pre_diag  # diagonal applied before/after the solve
        if diag is None and dense is None and chol is None:
            raise ValueError("weight operator needs a diagonal, matrix or factor")

    @property
    def size(self) -> int:
        if self._diag is not None:
            return self._diag.size
        if self._dense is not None:
            return self._dense.shape[0]
        return self._chol.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self._diag is not None:
            return v * (self._diag if v.ndim == 1 else self._diag[:, None])
        if self._dense is not None:
            return self._dense @ v
        w = v if self._pre_diag is None else (
            v * (self._pre_diag if v.ndim == 1 else self._pre_diag[:, None]))
        out = scipy.linalg.cho_solve((self._chol, False), w)
        if self._pre_diag is not None:
            out = out * (self._pre_diag if out.ndim == 1 else self._pre_diag[:, None])
        return out

    def half(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self._diag is not None:
            root = np.sqrt(self._diag)
            return a * (root if a.ndim == 1 else root[:, None])
        if self._dense is not None:
            if not hasattr(self, "_dense_chol"):
                self._dense_chol = scipy.linalg.cholesky(self._dense, lower=False)
            return self._dense_chol @ a
        w = a if self._pre_diag is None else (
            a * (self._pre_diag if a.ndim == 1 else self._pre_diag[:, None]))
        return scipy.linalg.solve_triangular(self._chol, w, trans="T", lower=False)

    def dense_matrix(self) -> np.ndarray:
        """Materialised operator; intended for tests and small sizes."""
        if self._dense is not None:
            return self._dense
        if self._diag is not None:
            return np.diag(self._diag)
        return self.apply(np.eye(self.size))


class SquaredWeight:
    """M^2 for a symmetric base weight M (the weak-form weighting)."""

    def __init__(self, base: SobolevWeight):
        self.base = base
        self.order = base.order
        self.variant = base.variant

    @property
    def size(self) -> int:
        return self.base.size

    def apply(self, v):
        return self.base.apply(self.base.apply(v))

    def half(self, a):
        return self.base.apply(a)

    def dense_matrix(self):
        m = self.base.dense_matrix()
        return m @ m


class TraceOperator:
    """Evaluation of a domain polynomial on one boundary-face grid."""

    def __init__(self, face: FaceGrid, n_dom: int, m: int):
        self.face = face
        self.m = m
        self.n_dom = n_dom
        self.domain_shape = (n_dom + 1,) * m
        ref_point = -1.0 if face.side < 0 else 1.0
        self._mats = []
        for axis in range(m):
            if axis == face.axis:
                self._mats.append(lagrange_matrix_1d(n_dom, np.array([ref_point])))
            else:
                self._mats.append(lagrange_matrix_1d(n_dom, face.grid.rule.nodes))
        self.n_rows = int(np.prod([mat.shape[0] for mat in self._mats]))
        self._face_shape = tuple(mat.shape[0] for mat in self._mats)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return apply_per_axis(values, self._mats, self.domain_shape)

    def apply_transpose(self, face_values: np.ndarray) -> np.ndarray:
        return apply_per_axis(face_values, [mat.T for mat in self._mats], self._face_shape)

    def dense(self) -> np.ndarray:
        return kron_dense(self._mats)


@dataclass(frozen=True)
class _CacheKey:
    kind: str
    payload: tuple


class OperatorCache:
    """Lazily assembled operators for one (dimension, degree, box) triple.

    Construction is cheap; matrices and factorisations are built on first
    request and memoised behind a lock, after which reads are concurrent.
    """

    def __init__(self, grid: TensorGrid):
        self.grid = grid
        self.m = grid.m
        self.n = grid.n
        self.shape = grid.shape
        self.weights = grid.weights
        self._diff_1d = [
            diff_matrix_1d(grid.rule, tuple(grid.box[i])) for i in range(grid.m)
        ]
        self._axis_w = [grid.axis_weights(i) for i in range(grid.m)]
        self._powers = [dict() for _ in range(grid.m)]
        self._store: dict = {}
        self._lock = threading.RLock()  # builds may request other cached entries

    # -- differentiation -------------------------------------------------

    def diff_1d_power(self, axis: int, power: int) -> np.ndarray | None:
        """D^power for one coordinate (None means identity)."""
        if power == 0:
            return None
        cache = self._powers[axis]
        if power not in cache:
            mat = self._diff_1d[axis]
            out = mat.copy()
            for _ in range(power - 1):
                out = mat @ out
            cache[power] = out
        return cache[power]

    def diff_apply(self, beta, values: np.ndarray) -> np.ndarray:
        """Apply the truncated derivative of multi-index beta to grid values."""
        mats = [self.diff_1d_power(i, int(b)) for i, b in enumerate(beta)]
        return apply_per_axis(values, mats, self.shape)

    def diff_dense(self, beta) -> np.ndarray:
        """Dense matrix of the multi-index derivative (Kronecker assembly)."""
        mats = []
        eye = np.eye(self.n + 1)
        for i, b in enumerate(beta):
            mat = self.diff_1d_power(i, int(b))
            mats.append(eye if mat is None else mat)
        return kron_dense(mats)

    def diff_transpose_apply(self, beta, values: np.ndarray) -> np.ndarray:
        """Apply the plain transpose D_beta^T to grid values."""
        mats = []
        for i, b in enumerate(beta):
            mat = self.diff_1d_power(i, int(b))
            mats.append(None if mat is None else mat.T)
        return apply_per_axis(values, mats, self.shape)

    def adjoint_apply(self, beta, values: np.ndarray) -> np.ndarray:
        """Apply the cubature adjoint W^-1 D_beta^T W, factorised per axis."""
        mats = []
        for i, b in enumerate(beta):
            mat = self.diff_1d_power(i, int(b))
            if mat is None:
                mats.append(None)
            else:
                w = self._axis_w[i]
                mats.append((mat.T * w[None, :]) / w[:, None])
        return apply_per_axis(values, mats, self.shape)

    def laplacian_dense(self) -> np.ndarray:
        """Dense sum of second derivatives over all coordinates."""
        def build():
            out = np.zeros((len(self.grid),) * 2)
            beta = [0] * self.m
            for i in range(self.m):
                beta[i] = 2
                out += self.diff_dense(beta)
                beta[i] = 0
            return out
        return self._memo(_CacheKey("laplacian", ()), build)

    # -- Sobolev weights --------------------------------------------------

    def _gram_terms(self, k: int, starred: bool):
        """1D factor lists whose Kronecker products sum to G_k or H_k."""
        terms = []
        for beta in multi_indices_up_to(self.m, k):
            mats = []
            for i, b in enumerate(beta):
                d = self.diff_1d_power(i, int(b))
                w = self._axis_w[i]
                if starred:
                    base = np.diag(1.0 / w) if d is None else (d / w[None, :]) @ d.T
                else:
                    base = np.diag(w) if d is None else d.T @ (w[:, None] * d)
                mats.append(base)
            terms.append(mats)
        return terms

    def _gram_dense(self, k: int, starred: bool) -> np.ndarray:
        key = _CacheKey("gram", (k, starred))

        def build():
            out = np.zeros((len(self.grid),) * 2)
            for mats in self._gram_terms(k, starred):
                out += kron_dense(mats)
            return 0.5 * (out + out.T)
        return self._memo(key, build)

    def sobolev_weight(self, order: int, variant: str = "plain") -> SobolevWeight:
        """Weight operator of the discrete H^order inner product."""
        if variant not in ("plain", "starred"):
            raise ValueError(f"unknown variant {variant!r}")
        if order == 0:
            return SobolevWeight(0, variant, diag=self.weights)
        key = _CacheKey("weight", (order, variant))

        def build():
            k = abs(order)
            starred = variant == "starred"
            gram = self._gram_dense(k, starred)
            if order > 0 and not starred:
                return SobolevWeight(order, variant, dense=gram)
            if order > 0 and starred:
                w = self.weights
                return SobolevWeight(order, variant, dense=(w[:, None] * gram) * w[None, :])
            chol = scipy.linalg.cholesky(gram, lower=False)
            # the factor is all a negative order needs; drop the cached Gram
            self._store.pop(_CacheKey("gram", (k, starred)), None)
            pre = self.weights if not starred else None
            return SobolevWeight(order, variant, chol=chol, pre_diag=pre)
        return self._memo(key, build)

    # -- traces ------------------------------------------------------------

    def faces(self, n_bnd: int) -> list[FaceGrid]:
        key = _CacheKey("faces", (n_bnd,))
        return self._memo(key, lambda: boundary_grids(self.m, n_bnd, self.grid.box))

    def trace(self, face: FaceGrid) -> TraceOperator:
        n_bnd = face.grid.n if face.grid is not None else 0
        key = _CacheKey("trace", (face.axis, face.side, n_bnd))
        return self._memo(key, lambda: TraceOperator(face, self.n, self.m))

    def face_weight(self, face: FaceGrid, order: int = 0, variant: str = "plain",
                    weak: bool = False):
        """Weight operator living on one face grid (L2 by default)."""
        if order != 0 and face.grid is not None:
            base = OperatorCache(face.grid).sobolev_weight(order, variant)
        else:
            base = SobolevWeight(0, variant, diag=face.weights)
        return SquaredWeight(base) if weak else base

    def _memo(self, key, build):
        with self._lock:
            if key not in self._store:
                self._store[key] = build()
            return self._store[key]


def operator_cache(m: int, n: int, box=None) -> OperatorCache:
    """Convenience constructor building the grid and its operator cache."""
    return OperatorCache(tensor_grid(m, n, box))
