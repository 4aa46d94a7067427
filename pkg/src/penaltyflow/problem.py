"""Differentiable inequality-constrained problems and the exact-penalty
machinery built on them: the penalty psi, the weighted cost fbar, its
gradient, and the gradient norm g.

Constraint convention throughout the package: every constraint is stored
as c_i(x) <= 0. Builders that accept other forms (Ax <= B, bounds) must
convert at construction time.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError

__all__ = [
    "Problem", "PenaltyConfig", "eval_penalty", "eval_weighted_cost",
    "eval_weighted_grad", "eval_g", "check_gradients", "GradCheckReport",
]


@dataclass(frozen=True)
class Problem:
    """Evaluator bundle for min f(x) subject to c_i(x) <= 0.

    Parameters
    ----------
    n : int
        Dimension of the decision vector.
    n_c : int
        Number of inequality constraints.
    f, f_x : callable
        Objective value and gradient, f(x) -> float, f_x(x) -> (n,).
    c, c_x : callable
        Constraint values and Jacobian, c(x) -> (n_c,), c_x(x) -> (n_c, n).
        For n_c = 0 both must return empty arrays of the right shape.

    Evaluators must be total on R^n (finite output for finite input) and
    are treated as read-only; nothing here mutates the problem.
    """

    n: int
    n_c: int
    f: callable
    f_x: callable
    c: callable
    c_x: callable

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.n_c < 0:
            raise ValueError("n_c must be >= 0")


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty exponent m for psi(x) = sum_i max(0, c_i(x))^m.

    m = 1 is allowed but makes the penalty gradient discontinuous at
    c_i = 0; the default m = 2 gives a C^1 penalty.
    """

    m: int = 2

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("penalty exponent m must be >= 1")


def _check_constraints(cvals):
    """Raise EvaluationError naming the first non-finite constraint."""
    cvals = np.asarray(cvals, dtype=float)
    if cvals.size and not np.all(np.isfinite(cvals)):
        bad = int(np.flatnonzero(~np.isfinite(cvals))[0])
        raise EvaluationError(bad)
    return cvals


def _check_objective(val):
    arr = np.asarray(val, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(None)
    return arr


def penalty_weights(cvals, rho, m):
    """Per-constraint gradient weights rho * m * max(0, c_i)^(m-1).

    This is the single shared source for both the weighted-cost gradient
    and the recovered KKT multipliers, so the stationarity residual built
    from the multipliers reproduces g bitwise.

    For m = 1 the weight at c_i = 0 exactly is taken as 0 (the one-sided
    limit from the feasible side), which keeps the choice deterministic.
    """
    cvals = np.asarray(cvals, dtype=float)
    if m == 1:
        return rho * (cvals > 0.0).astype(float)
    cp = np.maximum(cvals, 0.0)
    return (rho * m) * cp ** (m - 1)


def eval_penalty(problem: Problem, x, cfg: PenaltyConfig) -> float:
    """psi(x) = sum_i max(0, c_i(x))^m; zero iff x is feasible."""
    if problem.n_c == 0:
        return 0.0
    cvals = _check_constraints(problem.c(x))
    cp = np.maximum(cvals, 0.0)
    return float(np.sum(cp ** cfg.m))


def eval_weighted_cost(problem: Problem, x, rho: float,
                       cfg: PenaltyConfig) -> float:
    """fbar(x, rho) = f(x) + rho * psi(x)."""
    fval = float(_check_objective(problem.f(x)))
    return fval + rho * eval_penalty(problem, x, cfg)


def eval_weighted_grad(problem: Problem, x, rho: float, cfg: PenaltyConfig):
    """Gradient of the weighted cost,

        fbar_x = f_x + rho * m * sum_i max(0, c_i)^(m-1) * dc_i/dx.

    Constraints with c_i(x) < 0 contribute nothing. For m = 1 the value
    on a constraint boundary uses the feasible-side limit (weight 0).
    """
    grad = _check_objective(problem.f_x(x))
    if problem.n_c == 0:
        return np.asarray(grad, dtype=float).copy()
    cvals = _check_constraints(problem.c(x))
    w = penalty_weights(cvals, rho, cfg.m)
    jac = np.asarray(problem.c_x(x), dtype=float)
    return grad + w @ jac


def eval_g(problem: Problem, x, rho: float, cfg: PenaltyConfig) -> float:
    """Euclidean norm of the weighted-cost gradient."""
    return float(np.linalg.norm(eval_weighted_grad(problem, x, rho, cfg)))


@dataclass(frozen=True)
class GradCheckReport:
    """Worst relative deviations between analytic and central-difference
    gradients; relative error is ||a - fd|| / max(1, ||fd||)."""

    f_x_error: float
    c_x_error: float
    worst: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "worst", max(self.f_x_error, self.c_x_error))


def _central_diff(fun, x, step):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        cols.append((np.asarray(fun(x + e), dtype=float)
                     - np.asarray(fun(x - e), dtype=float)) / (2.0 * step))
    return np.stack(cols, axis=-1)


def check_gradients(problem: Problem, x, step: float,
                    cfg: PenaltyConfig) -> GradCheckReport:
    """Compare f_x and the constraint Jacobian against central differences.

    Informational only; never raises on a bad gradient, the report is the
    diagnostic. ``step`` must be positive.
    """
    if step <= 0.0:
        raise ValueError("step must be > 0")
    x = np.asarray(x, dtype=float)

    fd_f = _central_diff(problem.f, x, step)
    an_f = np.asarray(problem.f_x(x), dtype=float)
    err_f = float(np.linalg.norm(an_f - fd_f)
                  / max(1.0, float(np.linalg.norm(fd_f))))

    if problem.n_c == 0:
        err_c = 0.0
    else:
        fd_c = _central_diff(problem.c, x, step)
        an_c = np.asarray(problem.c_x(x), dtype=float)
        err_c = float(np.linalg.norm(an_c - fd_c)
                      / max(1.0, float(np.linalg.norm(fd_c))))
    return GradCheckReport(f_x_error=err_f, c_x_error=err_c)
