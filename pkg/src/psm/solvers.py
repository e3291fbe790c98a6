"""Coefficient solvers: closed-form descent, gradient flows, quasi-Newton.

Affine losses admit the closed-form limit of the gradient flow: the
normal system H x = 2 b solved by a symmetric factorisation with one pass
of iterative refinement.  Everything else is iterated: implicit Euler
(proximal) steps with exact linear inner solves for affine gradients and a
damped Newton inner loop otherwise, a limited-memory BFGS with strong
Wolfe line search, and a damped Newton-Raphson for residual systems.

The implicit-Euler flow of a lambda-convex loss contracts the loss gap by
at least (1 + lambda*tau)^-2 per step; ``convergence_diagnostics`` fits
the observed rate of a trace against that bound.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize


@dataclass
class FlowTrace:
    """Loss values per accepted step of an iterative solve."""

    losses: np.ndarray
    tau: float = 0.0
    measured_rate: float | None = None
    lambda_hat: float | None = None


@dataclass
class SolveReport:
    """Outcome of one solve: solution vector, diagnostics and timings."""

    solution: np.ndarray
    inferred_params: dict = field(default_factory=dict)
    final_loss: float = np.nan
    iterations: int = 0
    wall_time_seconds: float = 0.0
    trace: FlowTrace | None = None
    eigen_estimate: float | None = None
    condition_estimate: float | None = None
    converged: bool = True
    non_unique: bool = False
    message: str = ""
    coefficients: object = None  # Surrogate(s), attached by the problem driver


def largest_eigenvalue(h: np.ndarray, iters: int = 80) -> float:
    """Power iteration with a fixed start vector (deterministic)."""
    n = h.shape[0]
    v = 1.0 + 0.01 * np.sin(np.arange(n))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = h @ v
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return abs(lam)


def smallest_eigenvalue(h: np.ndarray, chol=None, iters: int = 80) -> float:
    """Inverse power iteration using a (possibly provided) Cholesky factor."""
    n = h.shape[0]
    if chol is None:
        try:
            chol = scipy.linalg.cho_factor(h, lower=False)
        except scipy.linalg.LinAlgError:
            return float(np.linalg.eigvalsh(h)[0])
    v = 1.0 + 0.01 * np.cos(np.arange(n))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = scipy.linalg.cho_solve(chol, v)
        lam = float(v @ w)
        v = w / np.linalg.norm(w)
    return 1.0 / lam if lam > 0 else 0.0


def analytic_descent(normal_operator: np.ndarray, rhs: np.ndarray,
                     cond_bound: float = 1e16) -> SolveReport:
    """Stationary point of the gradient flow of an affine loss.

    Solves H x = 2 rhs by Cholesky with iterative refinement.  A singular
    or indefinite operator (or a condition estimate beyond ``cond_bound``)
    falls back to the least-squares pseudo-inverse solution and flags the
    result as non-unique.
    """
    t0 = time.perf_counter()
    h = np.asarray(normal_operator, dtype=float)
    b = np.asarray(rhs, dtype=float)
    target = 2.0 * b
    scale = np.linalg.norm(b)

    chol = None
    try:
        chol = scipy.linalg.cho_factor(h, lower=False)
    except scipy.linalg.LinAlgError:
        pass

    eig_min = smallest_eigenvalue(h, chol=chol) if chol is not None else None
    eig_max = largest_eigenvalue(h)
    cond = (eig_max / eig_min) if (eig_min and eig_min > 0) else np.inf

    if chol is None or not np.isfinite(cond) or cond > cond_bound:
        x, residues, rank, sv = np.linalg.lstsq(h, target, rcond=None)
        res = np.linalg.norm(h @ x - target)
        return SolveReport(
            solution=x,
            final_loss=np.nan,
            iterations=1,
            wall_time_seconds=time.perf_counter() - t0,
            eigen_estimate=eig_min if eig_min is not None else 0.0,
            condition_estimate=cond,
            converged=res <= max(1e-9 * scale, 1e-13),
            non_unique=True,
            message=f"pseudo-inverse fallback (rank {rank}/{h.shape[0]})",
        )

    x = scipy.linalg.cho_solve(chol, target)
    residual = np.inf
    for _ in range(3):
        r = target - h @ x
        residual = np.linalg.norm(r)
        if residual <= 1e-9 * max(scale, 1e-300):
            break
        x = x + scipy.linalg.cho_solve(chol, r)
    converged = residual <= 1e-9 * max(scale, 1e-300) or scale == 0.0
    return SolveReport(
        solution=x,
        final_loss=np.nan,
        iterations=1,
        wall_time_seconds=time.perf_counter() - t0,
        eigen_estimate=eig_min,
        condition_estimate=cond,
        converged=converged,
        message="" if converged else f"refined residual {residual:.3e} above tolerance",
    )


@dataclass
class FlowOptions:
    tau: float = 0.1
    step_tol: float = 1e-12
    grad_tol: float = 1e-12
    max_iters: int = 10_000
    max_halvings: int = 20
    inner_tol: float = 1e-12
    inner_max_iters: int = 50


def _newton_inner_step(loss, x_prev, y0, tau, opts: FlowOptions):
    """Solve y - x_prev + tau * grad L(y) = 0 by damped Newton.

    The defect is tau times the gradient of the proximal objective
    phi(y) = |y - x|^2 / (2 tau) + L(y), so steps are damped on phi.
    A shifted Hessian I + tau*H(y) that fails to be positive definite
    means tau is too large for a stable step; the caller halves tau.
    """
    y = y0.copy()
    loss_val = loss.value(y)

    def defect(z):
        return z - x_prev + tau * loss.gradient(z)

    def phi(z, lz):
        d = z - x_prev
        return float(d @ d) / (2.0 * tau) + lz

    def factor_at(z):
        jac = tau * loss.hessian(z)
        jac[np.diag_indices_from(jac)] += 1.0
        return scipy.linalg.cho_factor(jac, lower=False, overwrite_a=True)

    g = defect(y)
    g0_norm = np.linalg.norm(g)
    tol = max(opts.inner_tol * g0_norm, 1e-14 * max(1.0, np.linalg.norm(x_prev)))

    def good_enough(gn):
        # deep relative progress counts as success once float noise
        # dominates the merit comparisons
        return gn <= max(1e-6 * g0_norm, 1e-11 * max(1.0, np.linalg.norm(x_prev)))

    merit = phi(y, loss_val)
    try:
        factor = factor_at(y)
    except scipy.linalg.LinAlgError:
        return y, False  # shifted Hessian not SPD: tau too large here
    refreshed = False
    for _ in range(opts.inner_max_iters):
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            return y, True
        # frozen SPD factor still yields descent directions for phi
        delta = scipy.linalg.cho_solve(factor, -g)
        slope = -float(g @ delta) / tau
        step = 1.0
        for _ in range(25):
            y_try = y + step * delta
            loss_try = loss.value(y_try)
            if phi(y_try, loss_try) <= merit + 1e-4 * step * slope + 1e-15 * abs(merit):
                y, loss_val = y_try, loss_try
                merit = phi(y, loss_val)
                break
            step *= 0.5
        else:
            return y, good_enough(gnorm)
        if step < 1.0 and not refreshed:
            try:
                factor = factor_at(y)
                refreshed = True
            except scipy.linalg.LinAlgError:
                return y, False
        g = defect(y)
    gnorm = np.linalg.norm(g)
    return y, gnorm <= tol or good_enough(gnorm)


def implicit_euler_flow(loss, x0: np.ndarray, options: FlowOptions | None = None) -> SolveReport:
    """Implicit-Euler discretisation of the gradient flow of a loss.

    Affine gradients make every step one symmetric linear solve with the
    factorisation of I + tau*H reused across steps; otherwise each step
    runs an inner Newton iteration, halving tau on failure (up to
    ``max_halvings``) before aborting.
    """
    opts = options or FlowOptions()
    t0 = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    losses = [loss.value(x)]
    noise_floor = 64.0 * np.finfo(float).eps * getattr(loss, "value_scale", 1.0)
    loss_scale = max(abs(losses[0]), noise_floor, 1e-300)
    tau = opts.tau
    halvings = 0
    converged = False
    message = ""

    quadratic = getattr(loss, "quadratic", False)
    factor = None
    if quadratic:
        h, b = loss.normal_equations()

        def refactor(t):
            a = t * h
            a[np.diag_indices_from(a)] += 1.0
            return scipy.linalg.cho_factor(a, lower=False)

        factor = refactor(tau)

    iterations = 0
    clean_steps = 0
    for iterations in range(1, opts.max_iters + 1):
        if quadratic:
            rhs = x + 2.0 * tau * b
            x_new = scipy.linalg.cho_solve(factor, rhs)
            r = rhs - x_new - tau * (h @ x_new)
            x_new = x_new + scipy.linalg.cho_solve(factor, r)
            accepted = True
        else:
            accepted = False
            for _ in range(opts.max_halvings + 1):
                x_new, ok = _newton_inner_step(loss, x, x, tau, opts)
                if ok and loss.value(x_new) <= losses[-1] * (1.0 + 1e-12) + noise_floor:
                    accepted = True
                    break
                tau *= 0.5
                halvings += 1
                clean_steps = 0
            if not accepted:
                message = f"inner Newton failed after {halvings} tau-halvings"
                break
            # recover the step size after a run of clean steps
            clean_steps += 1
            if clean_steps >= 3 and tau < opts.tau:
                tau = min(2.0 * tau, opts.tau)
                clean_steps = 0

        step_norm = np.linalg.norm(x_new - x)
        x = x_new
        losses.append(loss.value(x))
        if step_norm <= opts.step_tol and tau == opts.tau:
            converged = True
            break
        if np.linalg.norm(loss.gradient(x)) / loss_scale <= opts.grad_tol:
            converged = True
            break

    return SolveReport(
        solution=x,
        final_loss=losses[-1],
        iterations=iterations,
        wall_time_seconds=time.perf_counter() - t0,
        trace=FlowTrace(losses=np.asarray(losses), tau=tau),
        converged=converged,
        message=message or (f"tau halved {halvings} times" if halvings else ""),
    )


@dataclass
class QuasiNewtonOptions:
    memory: int = 10
    grad_tol: float = 1e-12
    max_iters: int = 5_000
    c1: float = 1e-4
    c2: float = 0.9
    normalise: bool = True


def quasi_newton_minimise(loss, x0: np.ndarray,
                          options: QuasiNewtonOptions | None = None) -> SolveReport:
    """Limited-memory BFGS with strong Wolfe line search.

    The loss is normalised by its initial value so the gradient tolerance
    is scale-free; the reported trace holds raw loss values.
    """
    opts = options or QuasiNewtonOptions()
    t0 = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()

    raw0 = loss.value(x)
    scale = 1.0 / max(abs(raw0), 1e-300) if opts.normalise else 1.0

    def fun(z):
        return loss.value(z) * scale

    def grad(z):
        return loss.gradient(z) * scale

    f = fun(x)
    g = grad(x)
    s_hist: list = []
    y_hist: list = []
    rho_hist: list = []
    losses = [f / scale]
    converged = False
    message = ""
    best_x, best_f = x.copy(), f

    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= opts.grad_tol:
            converged = True
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            beta = rho * (y @ q)
            q += (a - beta) * s
        direction = -q
        if direction @ g >= 0:
            direction = -g

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha, _, _, f_new, _, slope_new = scipy.optimize.line_search(
                fun, grad, x, direction, gfk=g, old_fval=f,
                c1=opts.c1, c2=opts.c2, maxiter=40,
            )
        if alpha is None:
            # Armijo backtracking fallback
            alpha, f_new = 1.0, None
            d_slope = direction @ g
            while alpha > 1e-20:
                cand = fun(x + alpha * direction)
                if cand <= f + opts.c1 * alpha * d_slope:
                    f_new = cand
                    break
                alpha *= 0.5
            if f_new is None or f_new >= f:
                converged = False
                message = "line search failed; returning best iterate"
                break

        x_new = x + alpha * direction
        g_new = grad(x_new)
        if f_new is None:
            f_new = fun(x_new)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > opts.memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        losses.append(f / scale)
        if f < best_f:
            best_x, best_f = x.copy(), f

    if best_f < f:
        x, f = best_x, best_f
    return SolveReport(
        solution=x,
        final_loss=f / scale,
        iterations=iterations,
        wall_time_seconds=time.perf_counter() - t0,
        trace=FlowTrace(losses=np.asarray(losses), tau=0.0),
        converged=converged,
        message=message,
    )


@dataclass
class NewtonOptions:
    tol_abs: float = 1e-12
    tol_rel: float = 1e-12
    max_iters: int = 50
    max_dampings: int = 30


def newton_raphson(residual, jacobian, x0: np.ndarray,
                   options: NewtonOptions | None = None) -> SolveReport:
    """Damped Newton-Raphson on a residual system F(x) = 0.

    Full steps are halved while they increase the residual norm; a
    singular Jacobian aborts with a condition diagnostic.
    """
    opts = options or NewtonOptions()
    t0 = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    f = np.asarray(residual(x), dtype=float)
    fnorm0 = np.linalg.norm(f)
    tol = max(opts.tol_abs, opts.tol_rel * fnorm0)
    norms = [fnorm0]
    converged = fnorm0 <= tol
    message = ""

    iterations = 0
    while not converged and iterations < opts.max_iters:
        iterations += 1
        jac = np.asarray(jacobian(x), dtype=float)
        try:
            delta = scipy.linalg.solve(jac, -f)
        except scipy.linalg.LinAlgError:
            message = f"singular Jacobian (cond ~ {np.linalg.cond(jac):.3e})"
            break
        fnorm = np.linalg.norm(f)
        step = 1.0
        for _ in range(opts.max_dampings):
            x_try = x + step * delta
            f_try = np.asarray(residual(x_try), dtype=float)
            if np.linalg.norm(f_try) < fnorm or np.linalg.norm(f_try) <= tol:
                x, f = x_try, f_try
                break
            step *= 0.5
        else:
            message = "damping failed to reduce the residual"
            break
        norms.append(np.linalg.norm(f))
        converged = norms[-1] <= tol

    return SolveReport(
        solution=x,
        final_loss=float(np.linalg.norm(f) ** 2),
        iterations=iterations,
        wall_time_seconds=time.perf_counter() - t0,
        trace=FlowTrace(losses=np.asarray(norms), tau=0.0),
        converged=converged,
        message=message,
    )


@dataclass
class RateReport:
    """Observed versus theoretical decay of an implicit-Euler loss trace."""

    lambda_hat: float
    theoretical_rate: float
    per_step_bound: float
    fitted_rate: float | None
    max_step_factor: float | None
    violations: int
    n_used: int


def convergence_diagnostics(trace: FlowTrace, lam: float,
                            loss_inf: float | None = None) -> RateReport:
    """Fit the exponential decay of a loss trace and compare with theory.

    lam is the convexity modulus (smallest Hessian eigenvalue); the
    implicit-Euler bound is a per-step gap factor of (1+lam*tau)^-2, i.e.
    a rate of 2*lambda_hat with lambda_hat = log(1+lam*tau)/tau.  A
    non-monotone trace reports the violation count and no rate.
    """
    losses = np.asarray(trace.losses, dtype=float)
    if losses.size < 5:
        raise ValueError("need at least 5 trace entries for a rate fit")
    tau = trace.tau
    lambda_hat = np.log1p(lam * tau) / tau if tau > 0 else lam
    per_step_bound = (1.0 + lam * tau) ** -2 if tau > 0 else np.nan

    tol = 1e-12 * np.abs(losses).max() + 1e-300
    violations = int(np.sum(np.diff(losses) > tol))
    if violations:
        return RateReport(lambda_hat, 2 * lambda_hat, per_step_bound,
                          None, None, violations, 0)

    inf_val = float(losses.min()) if loss_inf is None else float(loss_inf)
    gaps = losses - inf_val
    floor = max(gaps[0] * 1e-13, 1e-300)
    usable = np.nonzero(gaps > floor)[0]
    if usable.size < 2:
        return RateReport(lambda_hat, 2 * lambda_hat, per_step_bound,
                          0.0, None, 0, int(usable.size))

    idx = usable
    t = idx * tau if tau > 0 else idx.astype(float)
    slope = np.polyfit(t, np.log(gaps[idx]), 1)[0]
    consecutive = idx[np.isin(idx + 1, idx)]
    factors = gaps[consecutive + 1] / gaps[consecutive]
    max_factor = float(factors.max()) if factors.size else None
    return RateReport(lambda_hat, 2 * lambda_hat, per_step_bound,
                      float(-slope), max_factor, 0, int(idx.size))
