"""Multi-index sets, Gauss-Legendre rules and tensor grids on boxes.

The polynomial space of maximum degree n in m variables is indexed by the
set of integer tuples alpha with 0 <= alpha_i <= n.  Grid points, cubature
weights and coefficient vectors all share one flat ordering of that set, so
everything downstream (differentiation matrices, Sobolev weights, losses)
can be expressed as plain numpy arrays indexed the same way.

The 1D rule is the (n+1)-point Gauss-Legendre rule: nodes are the roots of
the Legendre polynomial of degree n+1, computed by the symmetric
tridiagonal (Golub-Welsch) eigenproblem with one Newton polish per node.
Tensor grids on a box [a_1,b_1] x ... x [a_m,b_m] map the reference nodes
affinely per coordinate; the weights absorb the Jacobian, so the rule
integrates polynomials of degree up to 2n+1 per coordinate exactly over
the box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal


class ResourceLimitError(ValueError):
    """Requested degree or point count exceeds the configured caps."""


@dataclass(frozen=True)
class ResourceLimits:
    """Caps guarding accidental huge allocations; raise them deliberately."""

    max_degree_1d: int = 1024
    max_points: int = 20_000_000


DEFAULT_LIMITS = ResourceLimits()


@dataclass(frozen=True)
class MultiIndexSet:
    """All m-tuples alpha with max-norm <= n, in a fixed flat order.

    The order is lexicographic comparing the *last* entry first, i.e. the
    first coordinate varies fastest:  (0,0), (1,0), (0,1), (1,1) for
    m=2, n=1.  ``indices`` has shape ((n+1)**m, m).
    """

    m: int
    n: int
    indices: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def position(self, alpha) -> int:
        """Flat position of a multi-index (inverse of ``indices[i]``)."""
        alpha = np.asarray(alpha, dtype=np.int64)
        if alpha.shape != (self.m,) or alpha.min() < 0 or alpha.max() > self.n:
            raise ValueError(f"index {alpha!r} not in the degree-{self.n} set")
        strides = (self.n + 1) ** np.arange(self.m)
        return int(alpha @ strides)


def multi_index_set(m: int, n: int, limits: ResourceLimits = DEFAULT_LIMITS) -> MultiIndexSet:
    """Build the ordered multi-index set for dimension m and degree n."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    count = (n + 1) ** m
    if count > limits.max_points:
        raise ResourceLimitError(
            f"(n+1)^m = {count} exceeds the cap of {limits.max_points} points"
        )
    # First coordinate fastest: column j cycles with period (n+1)**j.
    flat = np.arange(count)
    cols = [(flat // (n + 1) ** j) % (n + 1) for j in range(m)]
    indices = np.stack(cols, axis=1).astype(np.int64)
    return MultiIndexSet(m=m, n=n, indices=indices)


@dataclass(frozen=True)
class LegendreRule1D:
    """(n+1)-point Gauss-Legendre rule on the reference interval (-1, 1)."""

    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def _legendre_value_and_derivative(k: int, x: np.ndarray):
    """Evaluate P_k and P_k' by the three-term recurrence."""
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    for j in range(k):
        p_prev, p = p, ((2 * j + 1) * x * p - j * p_prev) / (j + 1)
    # dP_k = k (x P_k - P_{k-1}) / (x^2 - 1); p_prev holds P_{k-1}
    dp = k * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def legendre_rule_1d(n: int, limits: ResourceLimits = DEFAULT_LIMITS) -> LegendreRule1D:
    """Nodes and weights of the (n+1)-point Gauss-Legendre rule.

    Nodes are the roots of the Legendre polynomial of degree n+1, obtained
    from the Jacobi-matrix eigenvalues and polished with one Newton step;
    weights are 2 / ((1-x^2) P'_{n+1}(x)^2).
    """
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    if n > limits.max_degree_1d:
        raise ResourceLimitError(
            f"degree {n} exceeds the 1D cap of {limits.max_degree_1d}"
        )
    if n == 0:
        return LegendreRule1D(n=0, nodes=np.zeros(1), weights=np.full(1, 2.0))

    k = n + 1
    j = np.arange(1, k)
    off_diag = j / np.sqrt(4.0 * j * j - 1.0)
    nodes, _ = eigh_tridiagonal(np.zeros(k), off_diag)
    p, dp = _legendre_value_and_derivative(k, nodes)
    nodes = nodes - p / dp  # one Newton polish
    _, dp = _legendre_value_and_derivative(k, nodes)
    weights = 2.0 / ((1.0 - nodes * nodes) * dp * dp)
    # enforce exact symmetry about the origin
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return LegendreRule1D(n=n, nodes=nodes, weights=weights)


def _check_box(box, m: int) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    if box.shape != (m, 2):
        raise ValueError(f"box must have shape ({m}, 2), got {box.shape}")
    if np.any(box[:, 0] >= box[:, 1]):
        raise ValueError("each box interval must satisfy a < b")
    return box


def unit_box(m: int) -> np.ndarray:
    """The reference box (-1, 1)^m."""
    return np.tile([-1.0, 1.0], (m, 1))


@dataclass(frozen=True)
class TensorGrid:
    """Tensorised Legendre grid with cubature weights, on a box.

    ``points[i]`` is the m-tuple (p_{alpha_1}, ..., p_{alpha_m}) mapped into
    the box, with alpha = index_set.indices[i]; ``weights[i]`` is the
    matching product cubature weight scaled by the box Jacobian.
    """

    m: int
    n: int
    box: np.ndarray = field(repr=False)
    index_set: MultiIndexSet = field(repr=False)
    rule: LegendreRule1D = field(repr=False)
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def shape(self) -> tuple:
        """Tensor shape (n+1,)*m matching the flat ordering (first axis fastest)."""
        return (self.n + 1,) * self.m

    def axis_nodes(self, i: int) -> np.ndarray:
        """1D nodes of coordinate i mapped into the box interval."""
        a, b = self.box[i]
        return 0.5 * (a + b) + 0.5 * (b - a) * self.rule.nodes

    def axis_weights(self, i: int) -> np.ndarray:
        """1D weights of coordinate i including the interval Jacobian."""
        a, b = self.box[i]
        return 0.5 * (b - a) * self.rule.weights

    def sample(self, f) -> np.ndarray:
        """Evaluate ``f`` on all grid points; f takes one array per coordinate."""
        coords = [self.points[:, i] for i in range(self.m)]
        return np.asarray(f(*coords), dtype=float)

    def integrate(self, values: np.ndarray) -> float:
        """Cubature of a function sampled on the grid."""
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self),):
            raise ValueError(f"expected {len(self)} values, got shape {values.shape}")
        return float(self.weights @ values)


def tensor_grid(m: int, n: int, box=None, limits: ResourceLimits = DEFAULT_LIMITS) -> TensorGrid:
    """Tensor Legendre grid of degree n on a box (default (-1,1)^m)."""
    index_set = multi_index_set(m, n, limits=limits)
    if box is None:
        box = unit_box(m)
    box = _check_box(box, m)
    rule = legendre_rule_1d(n, limits=limits)

    centers = 0.5 * (box[:, 0] + box[:, 1])
    spans = 0.5 * (box[:, 1] - box[:, 0])
    points = centers[None, :] + spans[None, :] * rule.nodes[index_set.indices]
    weights = np.prod(spans[None, :] * rule.weights[index_set.indices], axis=1)
    return TensorGrid(
        m=m, n=n, box=box, index_set=index_set, rule=rule,
        points=points, weights=weights,
    )


@dataclass(frozen=True)
class FaceGrid:
    """Legendre grid on one face of a box, embedded back into m dimensions.

    The face fixes coordinate ``axis`` at the lower (side=-1) or upper
    (side=+1) end of its interval.  ``grid`` is the (m-1)-dimensional
    tensor grid over the remaining coordinates (``None`` when m == 1, in
    which case the face is a single point of weight 1).
    """

    axis: int
    side: int
    fixed_value: float
    grid: TensorGrid | None
    embedded_points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.embedded_points.shape[0]


def boundary_grids(m: int, n_bnd: int, box=None, limits: ResourceLimits = DEFAULT_LIMITS) -> list[FaceGrid]:
    """The 2m face grids of the box, ordered (axis 0 low, axis 0 high, ...)."""
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    if box is None:
        box = unit_box(m)
    box = _check_box(box, m)

    faces = []
    for axis, side in itertools.product(range(m), (-1, +1)):
        fixed = box[axis, 0] if side < 0 else box[axis, 1]
        if m == 1:
            points = np.array([[fixed]])
            faces.append(FaceGrid(
                axis=axis, side=side, fixed_value=fixed, grid=None,
                embedded_points=points, weights=np.ones(1),
            ))
            continue
        sub_box = np.delete(box, axis, axis=0)
        sub = tensor_grid(m - 1, n_bnd, sub_box, limits=limits)
        points = np.empty((len(sub), m))
        points[:, axis] = fixed
        other = [i for i in range(m) if i != axis]
        points[:, other] = sub.points
        faces.append(FaceGrid(
            axis=axis, side=side, fixed_value=fixed, grid=sub,
            embedded_points=points, weights=sub.weights.copy(),
        ))
    return faces
