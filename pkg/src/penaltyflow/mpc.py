"""Closed-loop model predictive control with the flow as the QP engine.

A discrete LTI plant is condensed over a finite horizon into a QP whose
linear term depends affinely on the measured state xi. At every control
step the instantiated QP is handed to the flow integrator (warm-started
from the previous solution), the first input of the optimizer is applied,
and the plant is advanced.

The decision vector is the stacked input sequence directly (the input
parametrization Pi is the identity), so u(k) is just the first n_u
components of the solution.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .fileio import atomic_write_text, fmt
from .flow import FlowParams, FlowState
from .integrator import IntegratorConfig, StopCriteria, solve
from .qp import QpData, qp_problem

__all__ = [
    "Plant", "ParametricQp", "condense", "instantiate", "mpc_step",
    "simulate_closed_loop", "ClosedLoopTrace", "double_integrator_demo",
    "DEMO_STOP",
]

# Per-step stop used by the built-in demo. The asymptotic constraint
# violation scales like sqrt(eps_psi) per constraint, so keeping applied
# inputs within 1e-6 of the box needs eps_psi well below 1e-12; the
# longer flow horizon that entails is cheap for the stiff backend.
DEMO_STOP = StopCriteria(eps_psi=1e-13, eps_g=1e-4, t_max=1e28,
                         rho_max=1e9, max_steps=5_000_000)


@dataclass(frozen=True)
class Plant:
    """Discrete-time LTI plant xi_{k+1} = A_d xi_k + B_d u_k."""

    A_d: np.ndarray
    B_d: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A_d, dtype=float)
        B = np.asarray(self.B_d, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A_d must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError(f"B_d has shape {B.shape}, expected "
                             f"({A.shape[0]}, n_u)")
        object.__setattr__(self, "A_d", A)
        object.__setattr__(self, "B_d", B)

    @property
    def n_xi(self) -> int:
        return self.A_d.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_d.shape[1]


@dataclass(frozen=True)
class ParametricQp:
    """State-parametric QP

        min (1/2) x'Hx + [f0 + F1 xi]'x
        s.t. A x <= b0 + Bmat xi

    with input parametrization u_stack = Pi x over horizon N.
    """

    H: np.ndarray
    f0: np.ndarray
    F1: np.ndarray
    A: np.ndarray
    b0: np.ndarray
    Bmat: np.ndarray
    Pi: np.ndarray
    N: int


def condense(plant: Plant, N: int, Q, R, P, u_max: float) -> ParametricQp:
    """Condense an N-step tracking problem into a ParametricQp.

    The cost is sum_{k=1..N} xi_k' Q xi_k + sum_{k=0..N-1} u_k' R u_k
    + xi_N' P xi_N under the prediction dynamics; substituting the
    stacked prediction Xi = T xi0 + S U gives

        H  = Rbar + S' Qbar S      (symmetrized)
        F1 = S' Qbar T ,   f0 = 0

    which represents half the true cost, leaving the argmin unchanged.
    Input box constraints |u_j| <= u_max become A = [I; -I],
    b0 = u_max * 1, Bmat = 0.
    """
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = np.asarray(P, dtype=float)
    n_xi, n_u = plant.n_xi, plant.n_u
    if N < 1:
        raise ValueError("horizon N must be >= 1")
    if Q.shape != (n_xi, n_xi) or P.shape != (n_xi, n_xi):
        raise ValueError("Q and P must be n_xi x n_xi")
    if R.shape != (n_u, n_u):
        raise ValueError("R must be n_u x n_u")
    if u_max < 0.0:
        raise ValueError("u_max must be >= 0")

    n = N * n_u
    T = np.zeros((N * n_xi, n_xi))
    S = np.zeros((N * n_xi, n))
    Apow = np.eye(n_xi)
    for k in range(N):
        Apow = plant.A_d @ Apow
        T[k * n_xi:(k + 1) * n_xi] = Apow
    for j in range(N):
        blk = plant.B_d.copy()
        for k in range(j, N):
            S[k * n_xi:(k + 1) * n_xi, j * n_u:(j + 1) * n_u] = blk
            blk = plant.A_d @ blk
    Qbar = sla.block_diag(*([Q] * (N - 1) + [Q + P])) if N > 1 \
        else (Q + P)
    Rbar = sla.block_diag(*([R] * N)) if N > 1 else R

    H = Rbar + S.T @ Qbar @ S
    H = 0.5 * (H + H.T)
    F1 = S.T @ Qbar @ T
    A = np.vstack([np.eye(n), -np.eye(n)])
    b0 = np.full(2 * n, float(u_max))
    Bmat = np.zeros((2 * n, n_xi))
    return ParametricQp(H=H, f0=np.zeros(n), F1=F1, A=A, b0=b0,
                        Bmat=Bmat, Pi=np.eye(n), N=N)


def instantiate(pqp: ParametricQp, xi) -> QpData:
    """Freeze the parametric QP at a measured state."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (pqp.F1.shape[1],):
        raise ValueError(f"xi has shape {xi.shape}, expected "
                         f"({pqp.F1.shape[1]},)")
    return QpData(H=pqp.H, F=pqp.f0 + pqp.F1 @ xi, A=pqp.A,
                  B=pqp.b0 + pqp.Bmat @ xi)


def mpc_step(pqp: ParametricQp, xi, params: FlowParams,
             stop: StopCriteria, config: IntegratorConfig,
             warm: Optional[np.ndarray] = None):
    """Solve the instantiated QP by flow integration and return
    (u_applied, SolveResult).

    Starts from (warm, rho = 0) when a previous solution is available,
    else from the origin. A non-converged solve still yields the best
    state reached; the caller sees the status on the result.
    """
    data = instantiate(pqp, xi)
    problem = qp_problem(data, params.cfg)
    n = data.n
    if warm is not None:
        warm = np.asarray(warm, dtype=float)
        if warm.shape != (n,):
            raise ValueError(f"warm has shape {warm.shape}, expected ({n},)")
        x0 = warm
    else:
        x0 = np.zeros(n)
    res = solve(problem, params, FlowState(x=x0, rho=0.0), stop, config)
    n_u = pqp.Pi.shape[0] // pqp.N
    u = (pqp.Pi @ res.x)[:n_u]
    return u, res


@dataclass
class ClosedLoopTrace:
    """Recorded closed-loop run: states xi[k] (pre-input), applied
    inputs u[k], and per-step solver summaries."""

    xi: np.ndarray
    u: np.ndarray
    statuses: list
    psi_finals: np.ndarray
    g_finals: np.ndarray
    steps: np.ndarray
    results: list = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(s == "converged" for s in self.statuses)

    def to_csv(self, path) -> None:
        n_xi = self.xi.shape[1]
        n_u = self.u.shape[1]
        header = ("k," + ",".join(f"xi{i}" for i in range(n_xi)) + ","
                  + ",".join(f"u{i}" for i in range(n_u))
                  + ",status,psi_final,g_final,steps")
        lines = [header]
        for k in range(self.u.shape[0]):
            lines.append(",".join(
                [str(k)] + [fmt(v) for v in self.xi[k]]
                + [fmt(v) for v in self.u[k]]
                + [self.statuses[k], fmt(self.psi_finals[k]),
                   fmt(self.g_finals[k]), str(int(self.steps[k]))]))
        atomic_write_text(path, "\n".join(lines) + "\n")


def simulate_closed_loop(plant: Plant, pqp: ParametricQp, xi0, steps: int,
                         params: FlowParams, stop: StopCriteria,
                         config: IntegratorConfig,
                         keep_results: bool = False) -> ClosedLoopTrace:
    """Run ``steps`` control steps from xi0, warm-starting each solve
    from the previous one. Aborts early (returning the partial trace) if
    a step ends in rhs_failure.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    xi = np.asarray(xi0, dtype=float).copy()
    xis, us, statuses, psis, gs, nsteps, results = [], [], [], [], [], [], []
    warm = None
    for _ in range(steps):
        u, res = mpc_step(pqp, xi, params, stop, config, warm=warm)
        xis.append(xi.copy())
        us.append(np.asarray(u, dtype=float).copy())
        statuses.append(res.status)
        psis.append(res.psi)
        gs.append(res.g)
        nsteps.append(res.accepted_steps)
        if keep_results:
            results.append(res)
        if res.status == "rhs_failure":
            break
        warm = res.x
        xi = plant.A_d @ xi + plant.B_d @ u
    return ClosedLoopTrace(
        xi=np.asarray(xis), u=np.asarray(us), statuses=statuses,
        psi_finals=np.asarray(psis), g_finals=np.asarray(gs),
        steps=np.asarray(nsteps, dtype=int), results=results)


def double_integrator_demo():
    """Built-in demo scenario: a zero-order-hold double integrator with
    sampling period 0.1 under an N = 10 horizon with |u| <= 0.5.

    State weight Q = I, input weight R = 0.1, terminal weight P from the
    discrete algebraic Riccati equation. Returns (plant, pqp, xi0).
    """
    dt = 0.1
    A_d = np.array([[1.0, dt], [0.0, 1.0]])
    B_d = np.array([[0.5 * dt * dt], [dt]])
    plant = Plant(A_d=A_d, B_d=B_d)
    Q = np.eye(2)
    R = np.array([[0.1]])
    P = sla.solve_discrete_are(A_d, B_d, Q, R)
    pqp = condense(plant, N=10, Q=Q, R=R, P=P, u_max=0.5)
    return plant, pqp, np.array([1.0, 0.0])
