"""Assembly of PDE losses over grid-value coefficients and scalar unknowns.

A loss is a sum of weighted squared residuals

    L(x) = sum_t  c_t * (A_t x - d_t)^T M_t (A_t x - d_t)

with M_t one of the Sobolev weight operators.  The strong form weights a
residual once; the weak form replaces M by M^2, which is the matrix of the
squared pairings against all Lagrange test functions.

Three concrete shapes cover the built-in problems:

* ``QuadraticLoss`` -- every residual affine in the unknowns.  Stores the
  dense normal operator H with gradient H x - 2 b, which is what both the
  analytic descent and the exact implicit-Euler step consume.
* ``BilinearParamLoss`` -- residual (A_0 + sum_k mu_k A_k) C - f(mu), i.e.
  scalar parameters multiplying operators (eigenvalue inference).  Exact
  gradient and Hessian from precomputed pairwise operator products.
* ``NonlinearLoss`` -- general residual terms with Jacobian-transpose
  callbacks (velocity convection), value and gradient only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import OperatorCache, SobolevWeight, SquaredWeight, syrk


@dataclass(frozen=True)
class LossSpec:
    """Choice of residual metrics and term weights.

    mode "weak" squares the PDE and boundary weight matrices, turning each
    residual norm into a sum of squared pairings with the Lagrange test
    functions.  The boundary term defaults to the plain L2 metric.
    """

    pde_order: int = -1
    pde_variant: str = "starred"
    mode: str = "strong"
    bnd_order: int = 0
    bnd_variant: str = "plain"
    pde_weight: float = 1.0
    bnd_weight: float = 1.0
    data_weight: float = 1.0

    def __post_init__(self):
        if self.mode not in ("strong", "weak"):
            raise ValueError(f"mode must be 'strong' or 'weak', got {self.mode!r}")
        if min(self.pde_weight, self.bnd_weight, self.data_weight) < 0:
            raise ValueError("term weights must be nonnegative")


def pde_weight_operator(cache: OperatorCache, spec: LossSpec):
    base = cache.sobolev_weight(spec.pde_order, spec.pde_variant)
    return SquaredWeight(base) if spec.mode == "weak" else base


def boundary_weight_operator(cache: OperatorCache, face, spec: LossSpec):
    return cache.face_weight(face, spec.bnd_order, spec.bnd_variant,
                             weak=(spec.mode == "weak"))


class QuadraticLoss:
    """L(x) = x^T H x / 2 - 2 b^T x + const with H symmetric PSD."""

    quadratic = True

    def __init__(self, h: np.ndarray, b: np.ndarray, const: float,
                 n_coeffs: int, param_names: tuple = ()):
        self.h = 0.5 * (h + h.T)
        self.b = b
        self.const = const
        self.n_coeffs = n_coeffs
        self.param_names = param_names
        # magnitude of the cancelling terms in value(); loss readings below
        # eps times this are float noise
        self.value_scale = abs(const) + 1.0

    @property
    def size(self) -> int:
        return self.b.size

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.h @ x) - 2.0 * self.b @ x + self.const)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.h @ np.asarray(x, dtype=float) - 2.0 * self.b

    def hessian(self, x=None) -> np.ndarray:
        return self.h

    def normal_equations(self):
        """Operator/right-hand-side pair; the minimiser solves H x = 2 b."""
        return self.h, self.b


class _QuadraticAssembler:
    """Accumulates squared-residual terms into (H, b, const)."""

    def __init__(self, size: int):
        self.h = np.zeros((size, size))
        self.b = np.zeros(size)
        self.const = 0.0

    def add(self, a: np.ndarray, d, metric, weight: float = 1.0):
        if weight == 0.0:
            return
        half_a = metric.half(a)
        self.h += 2.0 * weight * syrk(half_a)
        if d is not None:
            md = metric.apply(d)
            self.b += weight * (a.T @ md)
            self.const += weight * float(d @ md)

    def add_diag(self, diag_vals: np.ndarray, d, weight: float = 1.0, offset: int = 0):
        """Identity residual block with a diagonal metric (data terms)."""
        if weight == 0.0:
            return
        idx = np.arange(diag_vals.size) + offset
        self.h[idx, idx] += 2.0 * weight * diag_vals
        if d is not None:
            self.b[idx] += weight * diag_vals * d
            self.const += weight * float(d @ (diag_vals * d))

    def finish(self, n_coeffs: int, param_names=()):
        return QuadraticLoss(self.h, self.b, self.const, n_coeffs, tuple(param_names))


class BilinearParamLoss:
    """Squared residual (A_0 + sum_k mu_k A_k) C - f(mu), plus fixed terms.

    The unknown vector is x = [C, mu_1..mu_K].  Pairwise products
    A_i^T M A_j are precomputed so Hessian evaluations stay O(size^2).
    """

    quadratic = False

    def __init__(self, ops: list, rhs: list, metric, pde_weight: float,
                 fixed_h: np.ndarray, fixed_b: np.ndarray, fixed_const: float,
                 param_names: tuple):
        # ops[0] is the parameter-free operator; rhs[k] pairs with mu_k (rhs[0] free).
        self.ops = ops
        self.rhs = rhs
        self.metric = metric
        self.pde_weight = pde_weight
        self.fixed_h = fixed_h
        self.fixed_b = fixed_b
        self.fixed_const = fixed_const
        self.param_names = param_names
        self.n_coeffs = ops[0].shape[1]
        self.n_params = len(ops) - 1
        self.value_scale = abs(fixed_const) + 1.0
        halves = [metric.half(op) for op in ops]
        k = len(halves)
        self._products = [[None] * k for _ in range(k)]
        for i in range(k):
            self._products[i][i] = syrk(halves[i])
            for j in range(i + 1, k):
                self._products[i][j] = halves[i].T @ halves[j]
                self._products[j][i] = self._products[i][j].T

    @property
    def size(self) -> int:
        return self.n_coeffs + self.n_params

    def optimal_params(self, coeffs: np.ndarray) -> np.ndarray:
        """Least-squares parameters for frozen coefficients.

        The PDE residual is linear in the parameters, so this is a tiny
        normal-equation solve; it makes a good flow initialiser when the
        coefficients start at observed data.
        """
        coeffs = np.asarray(coeffs, dtype=float)
        r0 = self.ops[0] @ coeffs - self.rhs[0]
        cols = np.stack([self.ops[k + 1] @ coeffs - self.rhs[k + 1]
                         for k in range(self.n_params)], axis=1)
        m_cols = self.metric.apply(cols)
        gram = cols.T @ m_cols
        return np.linalg.solve(gram, -(m_cols.T @ r0))

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        return x[: self.n_coeffs], x[self.n_coeffs:]

    def _residual_parts(self, coeffs, mus):
        scale = np.concatenate(([1.0], mus))
        a_mu = sum(s * op for s, op in zip(scale, self.ops))
        f_mu = sum(s * r for s, r in zip(scale, self.rhs))
        return a_mu @ coeffs - f_mu, a_mu

    def value(self, x) -> float:
        coeffs, mus = self._split(x)
        res, _ = self._residual_parts(coeffs, mus)
        pde = self.pde_weight * float(res @ self.metric.apply(res))
        fixed = 0.5 * coeffs @ (self.fixed_h @ coeffs) - 2.0 * self.fixed_b @ coeffs
        return pde + float(fixed) + self.fixed_const

    def gradient(self, x) -> np.ndarray:
        coeffs, mus = self._split(x)
        res, a_mu = self._residual_parts(coeffs, mus)
        mres = self.metric.apply(res)
        grad_c = 2.0 * self.pde_weight * (a_mu.T @ mres)
        grad_c += self.fixed_h @ coeffs - 2.0 * self.fixed_b
        grad_mu = np.array([
            2.0 * self.pde_weight * float((self.ops[k + 1] @ coeffs - self.rhs[k + 1]) @ mres)
            for k in range(self.n_params)
        ])
        return np.concatenate([grad_c, grad_mu])

    def hessian(self, x) -> np.ndarray:
        coeffs, mus = self._split(x)
        res, _ = self._residual_parts(coeffs, mus)
        mres = self.metric.apply(res)
        scale = np.concatenate(([1.0], mus))
        nc, npar = self.n_coeffs, self.n_params
        h = np.zeros((self.size, self.size))

        h_cc = np.zeros((nc, nc))
        for i, si in enumerate(scale):
            for j, sj in enumerate(scale):
                h_cc += si * sj * self._products[i][j]
        h[:nc, :nc] = 2.0 * self.pde_weight * h_cc + self.fixed_h

        dres = [self.ops[k + 1] @ coeffs - self.rhs[k + 1] for k in range(npar)]
        m_dres = [self.metric.apply(d) for d in dres]
        a_mu_t = sum(si * op.T for si, op in zip(scale, self.ops))
        for k in range(npar):
            # Gauss-Newton block A(mu)^T M dres_k plus the curvature A_k^T M res
            cross = a_mu_t @ m_dres[k] + self.ops[k + 1].T @ mres
            h[:nc, nc + k] = 2.0 * self.pde_weight * cross
            h[nc + k, :nc] = h[:nc, nc + k]
            for l in range(npar):
                h[nc + k, nc + l] = 2.0 * self.pde_weight * float(dres[l] @ m_dres[k])
        return 0.5 * (h + h.T)


@dataclass
class ResidualTerm:
    """One nonlinear residual with its metric and Jacobian-transpose action.

    ``jacobian_dense`` and ``second_order`` are optional; when every term
    provides them the loss exposes an exact Hessian (Gauss-Newton part
    plus the residual-weighted curvature of the term).
    """

    residual: callable              # x -> residual vector
    jacobian_t_apply: callable      # (x, v) -> J(x)^T v over the unknown vector
    metric: SobolevWeight | SquaredWeight
    weight: float = 1.0
    jacobian_dense: callable | None = None   # x -> dense J(x)
    second_order: callable | None = None     # (x, v) -> sum_i v_i hess(res_i)


class NonlinearLoss:
    """Sum of nonlinear residual terms plus an optional quadratic part."""

    quadratic = False

    def __init__(self, size: int, terms: list, quad: QuadraticLoss | None = None,
                 param_names: tuple = ()):
        self.size = size
        self.terms = terms
        self.quad = quad
        self.param_names = param_names

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = self.quad.value(x) if self.quad is not None else 0.0
        for term in self.terms:
            res = term.residual(x)
            total += term.weight * float(res @ term.metric.apply(res))
        return total

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        grad = self.quad.gradient(x) if self.quad is not None else np.zeros(self.size)
        for term in self.terms:
            res = term.residual(x)
            grad += 2.0 * term.weight * term.jacobian_t_apply(x, term.metric.apply(res))
        return grad

    def hessian(self, x) -> np.ndarray:
        if any(t.jacobian_dense is None for t in self.terms):
            raise NotImplementedError("a residual term lacks a dense Jacobian")
        x = np.asarray(x, dtype=float)
        h = np.zeros((self.size, self.size))
        if self.quad is not None:
            h += self.quad.hessian()
        for term in self.terms:
            jac = term.jacobian_dense(x)
            h += 2.0 * term.weight * syrk(term.metric.half(jac))
            if term.second_order is not None:
                res = term.residual(x)
                h += 2.0 * term.weight * term.second_order(x, term.metric.apply(res))
        return 0.5 * (h + h.T)


def _coeff_field(coeff, grid) -> np.ndarray:
    if callable(coeff):
        return grid.sample(coeff)
    return np.full(len(grid), float(coeff))


def operator_matrix(cache: OperatorCache, terms) -> np.ndarray:
    """Dense matrix of sum_beta diag(a_beta) D_beta on grid values."""
    grid = cache.grid
    out = np.zeros((len(grid), len(grid)))
    for beta, coeff in terms:
        block = cache.diff_dense(beta)
        out += _coeff_field(coeff, grid)[:, None] * block
    return out


def _boundary_blocks(problem, cache: OperatorCache, n_bnd: int, spec: LossSpec,
                     n_cols: int, col_offset: int = 0):
    """Yield (A, d, metric) triples for the per-face Dirichlet terms."""
    blocks = []
    for face in cache.faces(n_bnd):
        trace = cache.trace(face)
        s = trace.dense()
        if col_offset or n_cols != s.shape[1]:
            a = np.zeros((s.shape[0], n_cols))
            a[:, col_offset:col_offset + s.shape[1]] = s
        else:
            a = s
        g_vals = problem.boundary_values(face)
        blocks.append((a, g_vals, boundary_weight_operator(cache, face, spec)))
    return blocks


def assemble_strong_loss(problem, cache: OperatorCache, n_bnd: int,
                         spec: LossSpec | None = None) -> QuadraticLoss:
    """Forward-problem loss: metric-weighted PDE residual plus boundary terms."""
    spec = spec or LossSpec()
    if spec.mode != "strong":
        raise ValueError("assemble_strong_loss requires a strong-mode spec")
    return _assemble_forward(problem, cache, n_bnd, spec)


def assemble_weak_loss(problem, cache: OperatorCache, n_bnd: int,
                       spec: LossSpec | None = None) -> QuadraticLoss:
    """Forward-problem loss with squared (test-function) weightings."""
    spec = spec or LossSpec(mode="weak", pde_order=0, pde_variant="plain")
    if spec.mode != "weak":
        raise ValueError("assemble_weak_loss requires a weak-mode spec")
    return _assemble_forward(problem, cache, n_bnd, spec)


def _assemble_forward(problem, cache, n_bnd, spec) -> QuadraticLoss:
    if getattr(problem, "unknown_params", None):
        raise ValueError(f"{problem.name} is an inverse problem; use assemble_inverse_loss")
    if getattr(problem, "nonlinear", False):
        raise ValueError(f"{problem.name} has nonlinear terms; use its residual system")
    grid = cache.grid
    a_pde = operator_matrix(cache, problem.operator_terms)
    f_vals = problem.rhs_values(grid)
    asm = _QuadraticAssembler(len(grid))
    asm.add(a_pde, f_vals, pde_weight_operator(cache, spec), spec.pde_weight)
    for a, d, metric in _boundary_blocks(problem, cache, n_bnd, spec, len(grid)):
        asm.add(a, d, metric, spec.bnd_weight)
    return asm.finish(n_coeffs=len(grid))


def assemble_inverse_loss(problem, data_values: np.ndarray, cache: OperatorCache,
                          n_bnd: int, spec: LossSpec | None = None):
    """Joint loss over (coefficients, parameters) given domain-grid data.

    The data term pins the surrogate to the samples in the plain L2 metric;
    boundary terms use the boundary cubature degree.  Returns a
    QuadraticLoss when the parameters only scale the right-hand side, and
    a BilinearParamLoss when they multiply operators.
    """
    spec = spec or LossSpec(pde_order=0, pde_variant="plain")
    if not getattr(problem, "unknown_params", None):
        raise ValueError(f"{problem.name} declares no unknown parameters")
    data_values = np.asarray(data_values, dtype=float)
    grid = cache.grid
    n = len(grid)
    if data_values.shape != (n,):
        raise ValueError(f"expected data of length {n}, got {data_values.shape}")

    names = [name for name, _ in problem.unknown_params]
    n_par = len(names)
    a0 = operator_matrix(cache, problem.operator_terms)
    f0 = problem.rhs_values(grid)
    param_ops = []
    param_rhs = []
    for name in names:
        terms = problem.param_operator_terms.get(name)
        param_ops.append(operator_matrix(cache, terms) if terms else None)
        rhs_fn = problem.param_rhs.get(name)
        param_rhs.append(grid.sample(rhs_fn) if rhs_fn else np.zeros(n))

    metric = pde_weight_operator(cache, spec)
    size = n + n_par

    if all(op is None for op in param_ops):
        # residual affine in (C, mu): stack parameter columns next to A_0
        a_ext = np.hstack([a0] + [-param_rhs[k][:, None] for k in range(n_par)])
        asm = _QuadraticAssembler(size)
        asm.add(a_ext, f0, metric, spec.pde_weight)
        asm.add_diag(grid.weights, data_values, spec.data_weight)
        for a, d, m in _boundary_blocks(problem, cache, n_bnd, spec, size):
            asm.add(a, d, m, spec.bnd_weight)
        return asm.finish(n_coeffs=n, param_names=names)

    ops = [a0] + [op if op is not None else np.zeros((n, n)) for op in param_ops]
    rhs = [f0] + param_rhs
    fixed = _QuadraticAssembler(n)
    fixed.add_diag(grid.weights, data_values, spec.data_weight)
    for a, d, m in _boundary_blocks(problem, cache, n_bnd, spec, n):
        fixed.add(a, d, m, spec.bnd_weight)
    return BilinearParamLoss(
        ops=ops, rhs=rhs, metric=metric, pde_weight=spec.pde_weight,
        fixed_h=fixed.h, fixed_b=fixed.b, fixed_const=fixed.const,
        param_names=tuple(names),
    )


def normal_equations(loss) -> tuple:
    """Dense normal operator and right-hand side of an affine loss.

    The gradient satisfies grad L(x) = H x - 2 b, so stationarity is the
    symmetric system H x = 2 b.
    """
    if not getattr(loss, "quadratic", False):
        raise ValueError("normal equations require an affine (quadratic) loss")
    return loss.normal_equations()
