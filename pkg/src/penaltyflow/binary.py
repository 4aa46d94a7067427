"""Binary optimization through smooth constraints and deflation.

Each binary variable contributes three inequality constraints

    x_i - x_i^2 <= 0,   -x_i <= 0,   x_i - 1 <= 0

whose only feasible values are x_i in {0, 1}; with the native constraints
this gives n_c = nbar_c + 3n. The penalty with m = 2 then grows with
order n_psi = 2m = 4, so the flow for these problems uses q = 4.

Successive local minima are visited by deflation: after a converged run
lands near a vertex, a localized Gaussian bump is added to the cost at
that vertex (sized against an admissible neighbor's value) and the flow
is restarted from it with rho reset to 0.
"""

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Optional

import numpy as np

from .errors import EnumerationBoundError
from .fileio import atomic_write_text, fmt
from .flow import FlowParams, FlowState
from .integrator import IntegratorConfig, StopCriteria, solve
from .problem import Problem

__all__ = [
    "BinaryProblem", "DeflationRecord", "BinaryRunResult",
    "binary_quadratic", "binarize", "find_neighbor", "deflate_cost",
    "solve_binary", "brute_force_oracle", "BINARY_Q",
]

# growth order of the m = 2 penalty over the binarization constraints
BINARY_Q = 4

ORACLE_N_MAX = 20

_NATIVE_TOL = 1e-9


@dataclass(frozen=True)
class BinaryProblem:
    """Objective and native constraints over n binary variables.

    f, f_x evaluate the (smooth) objective on all of R^n; c_native and
    c_native_x evaluate the nbar_c native inequality constraints, or are
    None when there are none. All n variables are binary.
    """

    n: int
    f: callable
    f_x: callable
    n_native: int = 0
    c_native: Optional[callable] = None
    c_native_x: Optional[callable] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.n_native < 0:
            raise ValueError("n_native must be >= 0")
        if (self.n_native > 0) != (self.c_native is not None):
            raise ValueError("c_native must be given iff n_native > 0")

    def native_feasible(self, x, tol: float = _NATIVE_TOL) -> bool:
        if self.n_native == 0:
            return True
        return bool(np.max(np.asarray(self.c_native(x), dtype=float)) <= tol)


def binary_quadratic(H, F, A=None, B=None) -> BinaryProblem:
    """Binary problem with objective (1/2) x'Hx + F'x and optional
    native linear constraints Ax <= B."""
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    F = np.asarray(F, dtype=float)
    n = F.size
    if H.shape != (n, n):
        raise ValueError(f"H has shape {H.shape}, expected ({n}, {n})")

    def f(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ H @ x) + float(F @ x)

    def f_x(x):
        return H @ np.asarray(x, dtype=float) + F

    if A is None:
        return BinaryProblem(n=n, f=f, f_x=f_x)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[1] != n or B.shape != (A.shape[0],):
        raise ValueError("native constraint dimensions are inconsistent")
    return BinaryProblem(
        n=n, f=f, f_x=f_x, n_native=A.shape[0],
        c_native=lambda x: A @ np.asarray(x, dtype=float) - B,
        c_native_x=lambda x: A)


def binarize(bp: BinaryProblem, f=None, f_x=None) -> Problem:
    """Smooth Problem enforcing binariness through inequalities.

    Constraint order: natives first, then x - x^2, then -x, then x - 1
    (n_c = n_native + 3n in total). ``f``/``f_x`` override the objective
    evaluators, which is how deflated costs enter; the constraints never
    change across deflation rounds.
    """
    n = bp.n
    fobj = f if f is not None else bp.f
    fgrad = f_x if f_x is not None else bp.f_x
    eye = np.eye(n)

    if bp.n_native:
        def c(x):
            x = np.asarray(x, dtype=float)
            return np.concatenate([
                np.asarray(bp.c_native(x), dtype=float),
                x - x * x, -x, x - 1.0])

        def c_x(x):
            x = np.asarray(x, dtype=float)
            return np.vstack([
                np.asarray(bp.c_native_x(x), dtype=float),
                np.diag(1.0 - 2.0 * x), -eye, eye])
    else:
        def c(x):
            x = np.asarray(x, dtype=float)
            return np.concatenate([x - x * x, -x, x - 1.0])

        def c_x(x):
            x = np.asarray(x, dtype=float)
            return np.vstack([np.diag(1.0 - 2.0 * x), -eye, eye])

    return Problem(n=n, n_c=bp.n_native + 3 * n, f=fobj, f_x=fgrad,
                   c=c, c_x=c_x)


def find_neighbor(x_s, bp: BinaryProblem):
    """First native-feasible neighbor of a binary point.

    Scans single-bit flips in index order, then two-bit flips in
    lexicographic index order, and returns the first candidate whose
    native constraints hold; None when every candidate is infeasible.
    The scan order is the deterministic generation process that makes
    deflation reproducible.
    """
    x_s = np.asarray(x_s, dtype=float)
    n = x_s.size
    for i in range(n):
        z = x_s.copy()
        z[i] = 1.0 - z[i]
        if bp.native_feasible(z):
            return z
    for i, j in combinations(range(n), 2):
        z = x_s.copy()
        z[i] = 1.0 - z[i]
        z[j] = 1.0 - z[j]
        if bp.native_feasible(z):
            return z
    return None


def deflate_cost(f_s, f_s_grad, x_s, z_s, mu_defl: float):
    """Add a localized bump at x_s sized against the neighbor z_s.

    Returns (f_new, f_new_grad, amplitude) with

        f_new(x) = f_s(x) + a * exp(-mu_defl * ||x - x_s||^2 / 4)
        a = max(1 + 2 f_s(z_s), 1 + 2 |f_s(z_s)|)

    The amplitude guard keeps a >= 1, so the bump always raises the
    value at x_s by at least 1 while the value at z_s (distance >= 1)
    moves by only a * exp(-mu_defl / 4). One bump need not lift f_new(x_s)
    above f_s(z_s) when f_s(x_s) is much lower; the deflation loop then
    lands on x_s again and stacks another bump.
    """
    if mu_defl <= 0.0:
        raise ValueError("mu_defl must be > 0")
    x_s = np.asarray(x_s, dtype=float).copy()
    fz = float(f_s(z_s))
    a = max(1.0 + 2.0 * fz, 1.0 + 2.0 * abs(fz))

    def f_new(x):
        d = np.asarray(x, dtype=float) - x_s
        return float(f_s(x)) + a * np.exp(-mu_defl * float(d @ d) / 4.0)

    def f_new_grad(x):
        d = np.asarray(x, dtype=float) - x_s
        bump = a * np.exp(-mu_defl * float(d @ d) / 4.0)
        return (np.asarray(f_s_grad(x), dtype=float)
                + bump * (-mu_defl / 2.0) * d)

    return f_new, f_new_grad, a


@dataclass(frozen=True)
class DeflationRecord:
    """One visited local minimum: visit index s, the rounded vertex x_s,
    its admissible neighbor z_s (None when none exists), the modified
    cost at x_s, the original cost, and the bump that was planted."""

    s: int
    x_s: np.ndarray
    z_s: Optional[np.ndarray]
    f_s_value: float
    f_original: float
    native_feasible: bool
    bump_strength: float
    bump_amplitude: float
    status: str


@dataclass
class BinaryRunResult:
    """Everything a deflation run produced: the records in visit order,
    the best native-feasible vertex under the original objective, the
    terminating condition, and the raw inner-solve count."""

    records: list
    best_x: Optional[np.ndarray]
    best_f: float
    status: str
    inner_solves: int

    def to_csv(self, path, oracle_f: Optional[float] = None,
               oracle_skipped: bool = False) -> None:
        header = "s,x_s,f_original,native_feasible,neighbor,status,gap"
        lines = [header]
        for r in self.records:
            bits = "".join(str(int(b)) for b in r.x_s)
            nbits = ("" if r.z_s is None
                     else "".join(str(int(b)) for b in r.z_s))
            if oracle_skipped:
                gap = "skipped"
            elif oracle_f is None:
                gap = ""
            else:
                gap = fmt(r.f_original - oracle_f)
            lines.append(",".join([
                str(r.s), bits, fmt(r.f_original),
                str(r.native_feasible).lower(), nbits, r.status, gap]))
        atomic_write_text(path, "\n".join(lines) + "\n")


def solve_binary(bp: BinaryProblem, params: Optional[FlowParams] = None,
                 stop: StopCriteria = StopCriteria(),
                 config: IntegratorConfig = IntegratorConfig(),
                 max_minima: Optional[int] = None,
                 mu_defl: float = 40.0) -> BinaryRunResult:
    """Deflation loop over flow solves of the binarized problem.

    Starting point is (0.5, ..., 0.5) with rho = 0; each subsequent solve
    restarts from the last vertex with rho reset to 0 and the bump
    stacked onto the running cost. A converged solve is rounded to the
    nearest vertex (threshold 0.5, ties to 1) and recorded if new.

    A solve can land back on a vertex that already carries a bump; the
    vertex is then bumped again (amplitudes stack) and the loop goes on,
    so recorded vertices stay pairwise distinct. ``max_minima`` caps the
    number of inner solves (default min(2^n, 64)).

    The loop ends on the cap, a missing neighbor, or a non-converged
    inner solve; the result carries the partially accumulated records in
    every case.
    """
    if params is None:
        params = FlowParams(q=BINARY_Q)
    if max_minima is None:
        max_minima = min(2 ** bp.n, 64)
    if max_minima < 1:
        raise ValueError("max_minima must be >= 1")

    cur_f, cur_g = bp.f, bp.f_x
    x_start = np.full(bp.n, 0.5)
    records = []
    seen = []
    status = "max_minima"
    inner = 0
    while inner < max_minima:
        problem = binarize(bp, f=cur_f, f_x=cur_g)
        res = solve(problem, params, FlowState(x=x_start, rho=0.0),
                    stop, config)
        inner += 1
        if res.status != "converged":
            status = f"inner_{res.status}"
            break
        x_vertex = np.where(res.x >= 0.5, 1.0, 0.0)
        is_new = not any(np.array_equal(x_vertex, v) for v in seen)
        z = find_neighbor(x_vertex, bp)
        f_s_here = float(cur_f(x_vertex))
        if z is not None:
            new_f, new_g, amplitude = deflate_cost(
                cur_f, cur_g, x_vertex, z, mu_defl)
        else:
            new_f, new_g, amplitude = cur_f, cur_g, np.nan
        if is_new:
            seen.append(x_vertex)
            records.append(DeflationRecord(
                s=len(records), x_s=x_vertex, z_s=z,
                f_s_value=f_s_here,
                f_original=float(bp.f(x_vertex)),
                native_feasible=bp.native_feasible(x_vertex),
                bump_strength=mu_defl,
                bump_amplitude=amplitude,
                status=res.status))
        if z is None:
            status = "no_neighbor"
            break
        cur_f, cur_g = new_f, new_g
        x_start = x_vertex
    best_x, best_f = None, np.inf
    for r in records:
        if r.native_feasible and r.f_original < best_f:
            best_x, best_f = r.x_s, r.f_original
    return BinaryRunResult(records=records, best_x=best_x, best_f=best_f,
                           status=status, inner_solves=inner)


def brute_force_oracle(bp: BinaryProblem):
    """Exhaustive scan of {0,1}^n filtered by the native constraints.

    Returns (x_best, f_best) or None when no binary point is feasible.
    Lexicographic enumeration with strict improvement gives the
    deterministic tie-break. n is capped at ORACLE_N_MAX.
    """
    if bp.n > ORACLE_N_MAX:
        raise EnumerationBoundError(
            f"n = {bp.n} exceeds the oracle bound {ORACLE_N_MAX}")
    best_x, best_f = None, np.inf
    for bits in product((0.0, 1.0), repeat=bp.n):
        x = np.array(bits)
        if not bp.native_feasible(x):
            continue
        v = float(bp.f(x))
        if v < best_f:
            best_x, best_f = x, v
    if best_x is None:
        return None
    return best_x, best_f
