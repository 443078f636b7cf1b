"""Direction subproblem machinery for the stochastic ghost method.

The subproblem is the strongly convex QP

    min_d  g.d + (tau/2) ||d||^2
    s.t.   c + A d <= kappa * e,   ||d||_inf <= beta,

solved by projected-gradient ascent on its concave dual over the constraint
multipliers mu >= 0: for fixed mu the box-constrained minimizer is the closed
form d(mu) = clip(-(g + A^T mu) / tau, +-beta), and the dual gradient is
c + A d(mu) - kappa e.  The number of constraints m is tiny (2-4) while the
dimension n is the network parameter count, so each dual step is O(mn).

kappa is the convex combination (1 - lam) * theta_feas + lam * max_j (c_j)_+,
where theta_feas = min over the box of max_j (c_j + A_j d)_+ is the optimal
value of the feasibility subproblem; this choice always makes the QP feasible.

The unbiased direction estimator combines subproblem solutions at four batch
sizes driven by a geometric draw N: a size-2^(N+1) batch, its odd/even
index-parity halves, and an independent singleton, via

    d = [d(big) - (d(odd) + d(even)) / 2] / ((1-p0)^N p0) + d(single).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

DUAL_TOL = 1e-8
DUAL_MAX_ITER = 100_000


class QpSolveError(RuntimeError):
    """Ghost subproblem solve did not reach optimality."""

    def __init__(self, message: str, solution: "GhostSolution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass
class GhostSubproblem:
    grad: np.ndarray      # (n,)
    cons_val: np.ndarray  # (m,)
    cons_jac: np.ndarray  # (m, n)
    tau: float
    beta: float
    kappa: float

    def __post_init__(self):
        self.grad = np.asarray(self.grad, dtype=np.float64)
        self.cons_val = np.asarray(self.cons_val, dtype=np.float64)
        self.cons_jac = np.asarray(self.cons_jac, dtype=np.float64).reshape(
            self.cons_val.shape[0], self.grad.shape[0]
        )
        if self.tau <= 0 or self.beta <= 0:
            raise ValueError("tau and beta must be > 0")


@dataclass
class GhostSolution:
    d: np.ndarray
    multipliers: np.ndarray
    status: str  # "optimal" | "infeasible"
    kkt_residual: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def feasibility_value(cons_val: np.ndarray, cons_jac: np.ndarray, beta: float) -> float:
    """Optimal value of min over ||d||_inf <= beta of max_j (c_j + A_j d)_+.

    Equals max(0, t*) with t* = min_d max_j (c_j + A_j d).  By LP duality
    t* = max over simplex weights w of  w.c - beta * ||A^T w||_1, which is a
    piecewise-linear concave maximization: closed form for m <= 2 (evaluate at
    the endpoints and sign-change breakpoints), an LP for larger m.
    """
    c = np.asarray(cons_val, dtype=np.float64)
    A = np.asarray(cons_jac, dtype=np.float64)
    m = c.shape[0]
    if m == 0:
        return 0.0
    if m == 1:
        t = c[0] - beta * np.abs(A[0]).sum()
    elif m == 2:
        a1, a2 = A[0], A[1]
        diff = a1 - a2
        with np.errstate(divide="ignore", invalid="ignore"):
            w_break = np.where(diff != 0.0, -a2 / diff, -1.0)
        cand = np.concatenate(([0.0, 1.0], w_break[(w_break > 0.0) & (w_break < 1.0)]))
        mix = cand[:, None] * a1 + (1.0 - cand) [:, None] * a2
        vals = cand * c[0] + (1.0 - cand) * c[1] - beta * np.abs(mix).sum(axis=1)
        t = vals.max()
    else:
        n = A.shape[1]
        # min t  s.t.  A d - t <= -c,  d in box, t free
        res = linprog(
            c=np.r_[np.zeros(n), 1.0],
            A_ub=np.c_[A, -np.ones(m)],
            b_ub=-c,
            bounds=[(-beta, beta)] * n + [(None, None)],
            method="highs",
        )
        if not res.success:  # box x R is never empty; guard anyway
            raise RuntimeError(f"feasibility LP failed: {res.message}")
        t = res.fun
    return max(0.0, float(t))


def compute_kappa(cons_val: np.ndarray, cons_jac: np.ndarray, beta: float,
                  lam: float) -> float:
    """Constraint relaxation level making the ghost QP feasible."""
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    c = np.asarray(cons_val, dtype=np.float64)
    if c.shape[0] == 0:
        return 0.0
    theta = feasibility_value(c, cons_jac, beta)
    return (1.0 - lam) * theta + lam * max(float(c.max()), 0.0)


def _solve_stack(grads, cons_vals, cons_jacs, tau, beta, kappas, mu0=None,
                 tol=DUAL_TOL, max_iter=DUAL_MAX_ITER):
    """Dual ascent on B structurally identical subproblems at once.

    Each problem keeps its own Lipschitz stepsize and freezes once its
    projected dual gradient is below tol, so results are identical to solving
    the problems one at a time.  Returns (D, Mu, converged, residuals).
    """
    G = np.asarray(grads, dtype=np.float64)
    C = np.asarray(cons_vals, dtype=np.float64)
    A = np.asarray(cons_jacs, dtype=np.float64)
    K = np.asarray(kappas, dtype=np.float64)
    B, m = C.shape

    if m == 0:
        D = np.clip(-G / tau, -beta, beta)
        return D, np.zeros((B, 0)), np.ones(B, dtype=bool), np.zeros(B)

    gram = A @ np.swapaxes(A, 1, 2)                      # (B, m, m)
    lips = np.linalg.eigvalsh(gram)[:, -1] / tau          # (B,)
    step = np.where(lips > 0.0, 1.0 / np.maximum(lips, 1e-300), 1.0)

    Mu = np.zeros((B, m)) if mu0 is None else np.array(mu0, dtype=np.float64)
    active = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        D = np.clip(-(G + np.einsum("bm,bmn->bn", Mu, A)) / tau, -beta, beta)
        R = C + np.einsum("bmn,bn->bm", A, D) - K[:, None]
        proj = np.where(Mu > 0.0, R, np.maximum(R, 0.0))
        active = np.abs(proj).max(axis=1) > tol
        if not active.any():
            break
        Mu[active] = np.maximum(Mu[active] + step[active, None] * R[active], 0.0)

    D = np.clip(-(G + np.einsum("bm,bmn->bn", Mu, A)) / tau, -beta, beta)
    R = C + np.einsum("bmn,bn->bm", A, D) - K[:, None]
    proj = np.where(Mu > 0.0, R, np.maximum(R, 0.0))
    residual = np.maximum(
        np.abs(proj).max(axis=1),                       # dual stationarity
        np.abs(Mu * R).max(axis=1),                     # complementary slackness
    )
    residual = np.maximum(residual, np.maximum(R, 0.0).max(axis=1))  # primal feas
    return D, Mu, ~active, residual


def solve_ghost_qp(p: GhostSubproblem, mu0: np.ndarray | None = None,
                   tol: float = DUAL_TOL, max_iter: int = DUAL_MAX_ITER) -> GhostSolution:
    """Solve one ghost subproblem; see module docstring for the method.

    On hitting the iteration cap the best iterate is classified: if the
    feasible region is actually empty the status is "infeasible", otherwise
    the solution is returned with its achieved KKT residual.
    """
    m0 = None if mu0 is None else np.asarray(mu0, dtype=np.float64)[None, :]
    D, Mu, conv, res = _solve_stack(
        p.grad[None], p.cons_val[None], p.cons_jac[None], p.tau, p.beta,
        np.array([p.kappa]), mu0=m0, tol=tol, max_iter=max_iter,
    )
    status = "optimal"
    if not conv[0]:
        theta = feasibility_value(p.cons_val - p.kappa, p.cons_jac, p.beta)
        status = "infeasible" if theta > tol else "optimal"
    return GhostSolution(d=D[0], multipliers=Mu[0], status=status,
                         kkt_residual=float(res[0]))


def sample_geometric(rng: np.random.Generator, p0: float) -> int:
    """N >= 0 with P(N = n) = (1 - p0)^n * p0."""
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1)")
    return int(rng.geometric(p0)) - 1


def mlmc_direction(oracle, params: np.ndarray, p0: float, rng: np.random.Generator,
                   *, tau: float, beta: float, lam: float, j_base: int = 1,
                   tol: float = DUAL_TOL, max_iter: int = DUAL_MAX_ITER) -> np.ndarray:
    """Unbiased estimate of the full-batch ghost direction at params.

    The oracle must provide ghost_batch(params, J, rng) -> stats and
    ghost_batch_pair(params, J, rng) -> (even, odd) where stats carry the
    batch-mean objective gradient, constraint values and constraint Jacobian
    (see problem.GhostStats).  kappa is recomputed per sub-batch from that
    batch's own constraint estimates.  Raises QpSolveError if any of the four
    subproblem solves fails to converge.
    """
    single = oracle.ghost_batch(params, j_base, rng)
    N = sample_geometric(rng, p0)
    even, odd = oracle.ghost_batch_pair(params, j_base << N, rng)
    big_f = 0.5 * (even.f_grad + odd.f_grad)
    big_c = 0.5 * (even.cons_val + odd.cons_val)
    big_j = 0.5 * (even.cons_jac + odd.cons_jac)

    batches = [(big_f, big_c, big_j),
               (odd.f_grad, odd.cons_val, odd.cons_jac),
               (even.f_grad, even.cons_val, even.cons_jac),
               (single.f_grad, single.cons_val, single.cons_jac)]
    kappas = [compute_kappa(c, A, beta, lam) for _, c, A in batches]
    D, _, conv, res = _solve_stack(
        np.stack([b[0] for b in batches]),
        np.stack([b[1] for b in batches]),
        np.stack([b[2] for b in batches]),
        tau, beta, np.asarray(kappas), tol=tol, max_iter=max_iter,
    )
    if not conv.all():
        worst = float(res.max())
        raise QpSolveError(f"ghost subproblem solve hit iteration cap "
                           f"(kkt residual {worst:.3e})")
    weight = (1.0 - p0) ** N * p0
    return (D[0] - 0.5 * (D[1] + D[2])) / weight + D[3]
