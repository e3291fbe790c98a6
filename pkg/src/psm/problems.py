"""Built-in benchmark problems with ground truths and error metrics.

Each problem fixes a box, a linear operator given as a list of
(multi-index, coefficient) pairs with coefficients either constants or
coordinate functions, a right-hand side, Dirichlet data on every face and,
where known, the exact solution.  Inverse problems additionally declare
scalar unknowns that either scale the right-hand side or multiply extra
operator terms.  The steady Navier-Stokes pair is nonlinear and ships its
own loss builders on top of the generic machinery.

Conventions worth noting: the two forward Poisson benchmarks state their
right-hand side as the Laplacian of the manufactured solution, so their
operator is +Laplace; the inverse Poisson problem uses -Laplace so that
the eigenfunction identity -Lap g = mu g holds with a positive mu.  The
harmonic-oscillator Hamiltonian carries the conventional 1/2 factors,
-Lap/2 + |x|^2/2, which is what makes the stated integer eigenvalues
mu = n1 + n2 + 1 exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import Surrogate
from .grid import FaceGrid, TensorGrid, unit_box
from .loss import (
    LossSpec,
    NonlinearLoss,
    QuadraticLoss,
    ResidualTerm,
    _QuadraticAssembler,
    boundary_weight_operator,
    pde_weight_operator,
)
from .operators import OperatorCache, SobolevWeight


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative description of one benchmark problem."""

    name: str
    m: int
    box: np.ndarray
    operator_terms: tuple = ()
    rhs: object = None
    boundary: object = None
    ground_truth: object = None
    unknown_params: tuple = ()
    param_operator_terms: dict = field(default_factory=dict)
    param_rhs: dict = field(default_factory=dict)
    param_truth: dict = field(default_factory=dict)
    data_field: object = None
    nonlinear: bool = False
    fields: tuple = ("u",)
    extras: dict = field(default_factory=dict)

    def rhs_values(self, grid: TensorGrid) -> np.ndarray:
        if self.rhs is None:
            return np.zeros(len(grid))
        return grid.sample(self.rhs)

    def boundary_values(self, face: FaceGrid) -> np.ndarray:
        if self.boundary is None:
            return np.zeros(len(face))
        pts = face.embedded_points
        return np.asarray(self.boundary(*[pts[:, i] for i in range(self.m)]), dtype=float)

    def data_values(self, grid: TensorGrid) -> np.ndarray:
        if self.data_field is None:
            raise ValueError(f"{self.name} has no data field")
        return grid.sample(self.data_field)


# ---------------------------------------------------------------------------
# Poisson benchmarks
# ---------------------------------------------------------------------------

def poisson2d_hard() -> ProblemSpec:
    """2D Poisson problem whose solution mixes fast oscillation and a
    steep tanh transition; the forcing is the Laplacian of the separable
    manufactured solution C*phi(x)*phi(y)."""
    c, a, beta, omega = 0.1, 0.1, 5.0, 10.0 * np.pi

    def phi(t):
        return a * np.sin(omega * t) + np.tanh(beta * t)

    def phi2(t):
        sech2 = 1.0 / np.cosh(beta * t) ** 2
        return -a * omega**2 * np.sin(omega * t) - 2.0 * beta**2 * np.tanh(beta * t) * sech2

    def truth(x, y):
        return c * phi(x) * phi(y)

    def rhs(x, y):
        return c * (phi2(x) * phi(y) + phi(x) * phi2(y))

    return ProblemSpec(
        name="poisson2d-hard", m=2, box=unit_box(2),
        operator_terms=(((2, 0), 1.0), ((0, 2), 1.0)),
        rhs=rhs, boundary=truth, ground_truth=truth,
    )


def poisson4d() -> ProblemSpec:
    """4D Poisson problem with the separable trigonometric solution."""

    def truth(x1, x2, x3, x4):
        return np.sin(x1) * np.cos(x2) * np.sin(x3) * np.cos(x4)

    def rhs(x1, x2, x3, x4):
        return -4.0 * truth(x1, x2, x3, x4)

    return ProblemSpec(
        name="poisson4d", m=4, box=unit_box(4),
        operator_terms=(((2, 0, 0, 0), 1.0), ((0, 2, 0, 0), 1.0),
                        ((0, 0, 2, 0), 1.0), ((0, 0, 0, 2), 1.0)),
        rhs=rhs, boundary=truth, ground_truth=truth,
    )


def poisson2d_inverse() -> ProblemSpec:
    """Infer the forcing amplitude mu in -Lap u = mu cos(pi x) sin(pi y)
    from samples of the matching solution; mu_gt = 2 pi^2."""
    mu_gt = 2.0 * np.pi**2

    def truth(x, y):
        return np.cos(np.pi * x) * np.sin(np.pi * y)

    return ProblemSpec(
        name="poisson2d-inverse", m=2, box=unit_box(2),
        operator_terms=(((2, 0), -1.0), ((0, 2), -1.0)),
        rhs=None, boundary=truth, ground_truth=truth,
        unknown_params=(("mu", 0.0),),
        param_rhs={"mu": truth},
        param_truth={"mu": mu_gt},
        data_field=truth,
    )


# ---------------------------------------------------------------------------
# Quantum harmonic oscillator
# ---------------------------------------------------------------------------

def hermite_value(k: int, x):
    """Physicists' Hermite polynomial H_k by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev
    h = 2.0 * x
    for j in range(1, k):
        h_prev, h = h, 2.0 * x * h - 2.0 * j * h_prev
    return h


def qho_eigenfunction(n1: int, n2: int):
    """Hermite-Gaussian eigenstate of the 2D harmonic oscillator."""
    norm = np.pi**-0.25 / math.sqrt(2.0 ** (n1 + n2) * math.factorial(n1) * math.factorial(n2))

    def g(x, y):
        return norm * np.exp(-(x * x + y * y) / 2.0) * hermite_value(n1, x) * hermite_value(n2, y)

    return g


def _qho_split(mu: int) -> tuple:
    if mu != int(mu) or mu < 1:
        raise ValueError(f"eigenvalue must be a positive integer n1+n2+1, got {mu}")
    total = int(mu) - 1
    return total - total // 2, total // 2


def qho_forward(mu: int, box=None) -> ProblemSpec:
    """Oscillator eigenproblem (-Lap/2 + |x|^2/2 - mu) u = 0 with Dirichlet
    data from the eigenstate of eigenvalue mu = n1 + n2 + 1."""
    n1, n2 = _qho_split(mu)
    truth = qho_eigenfunction(n1, n2)
    if box is None:
        box = unit_box(2)

    def potential_term(x, y):
        return 0.5 * (x * x + y * y) - float(mu)

    return ProblemSpec(
        name=f"qho{int(mu)}", m=2, box=np.asarray(box, dtype=float),
        operator_terms=(((2, 0), -0.5), ((0, 2), -0.5), ((0, 0), potential_term)),
        rhs=None, boundary=truth, ground_truth=truth,
        extras={"mu": float(mu), "hermite_orders": (n1, n2)},
    )


def qho_inverse(mu_gt: int = 9, box=None) -> ProblemSpec:
    """Infer the oscillator eigenvalue from sampled eigenstate data."""
    n1, n2 = _qho_split(mu_gt)
    truth = qho_eigenfunction(n1, n2)
    if box is None:
        box = 5.3 * unit_box(2)

    def potential(x, y):
        return 0.5 * (x * x + y * y)

    return ProblemSpec(
        name="qho-inverse", m=2, box=np.asarray(box, dtype=float),
        operator_terms=(((2, 0), -0.5), ((0, 2), -0.5), ((0, 0), potential)),
        rhs=None, boundary=truth, ground_truth=truth,
        unknown_params=(("mu", 0.0),),
        param_operator_terms={"mu": (((0, 0), -1.0),)},
        param_truth={"mu": float(mu_gt)},
        data_field=truth,
    )


# ---------------------------------------------------------------------------
# Steady incompressible Navier-Stokes
# ---------------------------------------------------------------------------

NS_VISCOSITY = 0.05


def _ns_fields():
    def u1(x, y):
        return -np.sin(np.pi * x) * np.cos(np.pi * y)

    def u2(x, y):
        return np.cos(np.pi * x) * np.sin(np.pi * y)

    def pressure(x, y):
        return x * np.exp(np.pi * y)

    return u1, u2, pressure


def _ns_forcing(nu: float):
    u1, u2, _ = _ns_fields()

    def f1(x, y):
        return (2.0 * nu * np.pi**2 * u1(x, y)
                - np.pi * np.cos(np.pi * x) * np.cos(np.pi * y) * u1(x, y)
                + np.pi * np.sin(np.pi * x) * np.sin(np.pi * y) * u2(x, y)
                + np.exp(np.pi * y))

    def f2(x, y):
        return (2.0 * nu * np.pi**2 * u2(x, y)
                + np.pi * np.cos(np.pi * x) * np.cos(np.pi * y) * u2(x, y)
                - np.pi * np.sin(np.pi * x) * np.sin(np.pi * y) * u1(x, y)
                + np.pi * x * np.exp(np.pi * y))

    return f1, f2


def navier_stokes_forward() -> ProblemSpec:
    u1, u2, pressure = _ns_fields()
    return ProblemSpec(
        name="ns-forward", m=2, box=unit_box(2),
        boundary=None, ground_truth=(u1, u2, pressure),
        nonlinear=True, fields=("u1", "u2", "p"),
        extras={"nu": NS_VISCOSITY},
    )


def navier_stokes_inverse() -> ProblemSpec:
    u1, u2, pressure = _ns_fields()
    return ProblemSpec(
        name="ns-inverse", m=2, box=unit_box(2),
        boundary=None, ground_truth=(u1, u2, pressure),
        unknown_params=(("nu", 0.0),),
        param_truth={"nu": NS_VISCOSITY},
        nonlinear=True, fields=("p",),
        extras={"nu": NS_VISCOSITY},
    )


def _ns_operators(cache: OperatorCache):
    dx = cache.diff_dense((1, 0))
    dy = cache.diff_dense((0, 1))
    lap = cache.diff_dense((2, 0)) + cache.diff_dense((0, 2))
    return dx, dy, lap


def assemble_ns_forward_loss(problem: ProblemSpec, cache: OperatorCache, n_bnd: int,
                             spec: LossSpec | None = None) -> NonlinearLoss:
    """Loss over x = [u1, u2, p] grid values: momentum residuals in the
    chosen metric, divergence and Dirichlet terms in plain L2, and a
    one-point pressure gauge."""
    spec = spec or LossSpec()
    nu = problem.extras["nu"]
    grid = cache.grid
    n = len(grid)
    dx, dy, lap = _ns_operators(cache)
    f1 = grid.sample(_ns_forcing(nu)[0])
    f2 = grid.sample(_ns_forcing(nu)[1])
    metric = pde_weight_operator(cache, spec)
    l2 = cache.sobolev_weight(0)

    def split(x):
        return x[:n], x[n:2 * n], x[2 * n:]

    def mom1_res(x):
        a, b, q = split(x)
        return -nu * (lap @ a) + a * (dx @ a) + b * (dy @ a) + dx @ q - f1

    def mom1_jt(x, v):
        a, b, q = split(x)
        out = np.zeros(3 * n)
        out[:n] = -nu * (lap.T @ v) + (dx @ a) * v + dx.T @ (a * v) + dy.T @ (b * v)
        out[n:2 * n] = (dy @ a) * v
        out[2 * n:] = dx.T @ v
        return out

    def mom1_jd(x):
        a, b, q = split(x)
        return np.hstack([
            -nu * lap + np.diag(dx @ a) + a[:, None] * dx + b[:, None] * dy,
            np.diag(dy @ a),
            dx,
        ])

    def mom1_so(x, v):
        out = np.zeros((3 * n, 3 * n))
        blk = v[:, None] * dx
        out[:n, :n] = blk + blk.T
        out[:n, n:2 * n] = (v[:, None] * dy).T
        out[n:2 * n, :n] = v[:, None] * dy
        return out

    def mom2_res(x):
        a, b, q = split(x)
        return -nu * (lap @ b) + a * (dx @ b) + b * (dy @ b) + dy @ q - f2

    def mom2_jt(x, v):
        a, b, q = split(x)
        out = np.zeros(3 * n)
        out[:n] = (dx @ b) * v
        out[n:2 * n] = -nu * (lap.T @ v) + (dy @ b) * v + dx.T @ (a * v) + dy.T @ (b * v)
        out[2 * n:] = dy.T @ v
        return out

    def mom2_jd(x):
        a, b, q = split(x)
        return np.hstack([
            np.diag(dx @ b),
            -nu * lap + np.diag(dy @ b) + a[:, None] * dx + b[:, None] * dy,
            dy,
        ])

    def mom2_so(x, v):
        out = np.zeros((3 * n, 3 * n))
        blk = v[:, None] * dy
        out[n:2 * n, n:2 * n] = blk + blk.T
        out[:n, n:2 * n] = v[:, None] * dx
        out[n:2 * n, :n] = (v[:, None] * dx).T
        return out

    def div_res(x):
        a, b, _ = split(x)
        return dx @ a + dy @ b

    def div_jt(x, v):
        out = np.zeros(3 * n)
        out[:n] = dx.T @ v
        out[n:2 * n] = dy.T @ v
        return out

    div_jac = np.hstack([dx, dy, np.zeros((n, n))])

    terms = [
        ResidualTerm(mom1_res, mom1_jt, metric, spec.pde_weight, mom1_jd, mom1_so),
        ResidualTerm(mom2_res, mom2_jt, metric, spec.pde_weight, mom2_jd, mom2_so),
        ResidualTerm(div_res, div_jt, l2, 1.0, lambda x: div_jac, None),
    ]

    u1_fn, u2_fn, p_fn = problem.ground_truth
    quad = _QuadraticAssembler(3 * n)
    for face in cache.faces(n_bnd):
        trace = cache.trace(face)
        s = trace.dense()
        w_b = boundary_weight_operator(cache, face, spec)
        pts = face.embedded_points
        for offset, g_fn in ((0, u1_fn), (n, u2_fn)):
            a_blk = np.zeros((s.shape[0], 3 * n))
            a_blk[:, offset:offset + n] = s
            quad.add(a_blk, np.asarray(g_fn(pts[:, 0], pts[:, 1]), dtype=float),
                     w_b, spec.bnd_weight)
    gauge_row = np.zeros((1, 3 * n))
    gauge_row[0, 2 * n] = 1.0
    gauge_val = np.array([p_fn(grid.points[0, 0], grid.points[0, 1])])
    quad.add(gauge_row, gauge_val, SobolevWeight(0, "plain", diag=np.ones(1)), 1.0)

    return NonlinearLoss(size=3 * n, terms=terms,
                         quad=quad.finish(n_coeffs=3 * n), param_names=())


def assemble_ns_linearized_loss(problem: ProblemSpec, cache: OperatorCache, n_bnd: int,
                                spec: LossSpec | None = None,
                                frozen_velocity=None) -> QuadraticLoss:
    """Picard linearisation of the forward loss: the convecting velocity is
    frozen at the given fields (zero gives the Stokes-like problem), leaving
    residuals affine in x = [u1, u2, p]."""
    spec = spec or LossSpec()
    nu = problem.extras["nu"]
    grid = cache.grid
    n = len(grid)
    dx, dy, lap = _ns_operators(cache)
    if frozen_velocity is None:
        a_f = np.zeros(n)
        b_f = np.zeros(n)
    else:
        a_f, b_f = (np.asarray(v, dtype=float) for v in frozen_velocity)
    f1 = grid.sample(_ns_forcing(nu)[0])
    f2 = grid.sample(_ns_forcing(nu)[1])
    metric = pde_weight_operator(cache, spec)
    l2 = cache.sobolev_weight(0)

    transport = a_f[:, None] * dx + b_f[:, None] * dy
    zero = np.zeros((n, n))
    asm = _QuadraticAssembler(3 * n)
    asm.add(np.hstack([-nu * lap + transport, zero, dx]), f1, metric, spec.pde_weight)
    asm.add(np.hstack([zero, -nu * lap + transport, dy]), f2, metric, spec.pde_weight)
    asm.add(np.hstack([dx, dy, zero]), None, l2, 1.0)

    u1_fn, u2_fn, p_fn = problem.ground_truth
    for face in cache.faces(n_bnd):
        trace = cache.trace(face)
        s = trace.dense()
        w_b = boundary_weight_operator(cache, face, spec)
        pts = face.embedded_points
        for offset, g_fn in ((0, u1_fn), (n, u2_fn)):
            a_blk = np.zeros((s.shape[0], 3 * n))
            a_blk[:, offset:offset + n] = s
            asm.add(a_blk, np.asarray(g_fn(pts[:, 0], pts[:, 1]), dtype=float),
                    w_b, spec.bnd_weight)
    gauge_row = np.zeros((1, 3 * n))
    gauge_row[0, 2 * n] = 1.0
    gauge_val = np.array([p_fn(grid.points[0, 0], grid.points[0, 1])])
    asm.add(gauge_row, gauge_val, SobolevWeight(0, "plain", diag=np.ones(1)), 1.0)
    return asm.finish(n_coeffs=3 * n)


def assemble_ns_inverse_loss(problem: ProblemSpec, cache: OperatorCache, n_bnd: int,
                             spec: LossSpec | None = None) -> QuadraticLoss:
    """Loss over x = [nu, p] given exact velocity samples; affine residuals,
    so the stationarity system is linear."""
    spec = spec or LossSpec()
    grid = cache.grid
    n = len(grid)
    dx, dy, lap = _ns_operators(cache)
    u1_fn, u2_fn, p_fn = problem.ground_truth
    a = grid.sample(u1_fn)
    b = grid.sample(u2_fn)
    nu_gt = problem.extras["nu"]
    f1 = grid.sample(_ns_forcing(nu_gt)[0])
    f2 = grid.sample(_ns_forcing(nu_gt)[1])
    conv1 = a * (dx @ a) + b * (dy @ a)
    conv2 = a * (dx @ b) + b * (dy @ b)
    metric = pde_weight_operator(cache, spec)

    asm = _QuadraticAssembler(1 + n)
    a1 = np.hstack([(-(lap @ a))[:, None], dx])
    asm.add(a1, f1 - conv1, metric, spec.pde_weight)
    a2 = np.hstack([(-(lap @ b))[:, None], dy])
    asm.add(a2, f2 - conv2, metric, spec.pde_weight)
    gauge_row = np.zeros((1, 1 + n))
    gauge_row[0, 1] = 1.0
    gauge_val = np.array([p_fn(grid.points[0, 0], grid.points[0, 1])])
    asm.add(gauge_row, gauge_val, SobolevWeight(0, "plain", diag=np.ones(1)), 1.0)
    return asm.finish(n_coeffs=n, param_names=("nu",))


# ---------------------------------------------------------------------------
# Registry and error metrics
# ---------------------------------------------------------------------------

BUILTIN_PROBLEMS = {
    "poisson2d-hard": poisson2d_hard,
    "poisson4d": poisson4d,
    "poisson2d-inverse": poisson2d_inverse,
    "qho21": lambda: qho_forward(21, box=5.3 * unit_box(2)),
    "qho31": lambda: qho_forward(31, box=unit_box(2)),
    "qho-inverse": qho_inverse,
    "ns-forward": navier_stokes_forward,
    "ns-inverse": navier_stokes_inverse,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return BUILTIN_PROBLEMS[name]()
    except KeyError:
        valid = ", ".join(sorted(BUILTIN_PROBLEMS))
        raise KeyError(f"unknown problem {name!r}; valid names: {valid}") from None


@dataclass(frozen=True)
class ErrorMetrics:
    """Mean and max absolute error on a uniform evaluation grid."""

    eps1: float
    eps_inf: float
    n_points: int
    eps_params: dict = field(default_factory=dict)


def evaluate_errors(surrogate: Surrogate, truth, points_per_axis: int) -> ErrorMetrics:
    """Compare a surrogate with the exact solution on a uniform tensor grid."""
    axes = [np.linspace(a, b, points_per_axis) for a, b in surrogate.box]
    approx = surrogate.eval_tensor(axes)
    # eval_tensor flattens first-axis-fastest; sample the truth in that order
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = [mm.flatten(order="F") for mm in mesh]
    exact = np.asarray(truth(*coords), dtype=float)
    diff = np.abs(approx - exact)
    return ErrorMetrics(
        eps1=float(diff.sum() / diff.size),
        eps_inf=float(diff.max()),
        n_points=diff.size,
    )
