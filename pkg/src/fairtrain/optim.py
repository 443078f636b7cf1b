"""The five training loops: stochastic ghost, SSL-ALM, ALM, switching
subgradient, and plain/penalized SGD.

Every loop consumes a problem object exposing the sampling oracles (see
problem.FairnessProblem; toys.py has desk-scale synthetic counterparts):

    dim, n_constraints
    objective_batch(x, J, rng)  -> (value, grad)
    constraint_batch(x, J, rng) -> (values, jacobian)
    constraint_values(x, J, rng) -> values
    ghost_batch / ghost_batch_pair (stochastic-ghost only)
    log_eval(x) -> (train loss, train constraints, test loss, test constraints)

Trajectories are reported through an optional logger callback with signature
(iteration, elapsed_seconds, train_loss, train_constraints, test_loss,
test_constraints), invoked every log_every iterations plus at the start and
end of the run.  Elapsed time excludes the full-batch evaluations behind the
callback, so curves stay comparable across algorithms.  All loops are
deterministic given the generator passed in.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .qp import QpSolveError, mlmc_direction

LOG_EVERY = 10


@dataclass
class StGhConfig:
    iterations: int
    p0: float = 0.4
    alpha0: float = 0.05
    alpha_hat: float = 0.05
    rho: float = 0.8       # accepted for config parity; the update rule never uses it
    tau: float = 1.0
    beta: float = 10.0
    lam: float = 0.5
    j_base: int = 1

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if min(self.alpha0, self.alpha_hat, self.tau, self.beta) <= 0:
            raise ValueError("alpha0, alpha_hat, tau, beta must be > 0")
        if self.alpha_hat * self.alpha0 >= 1.0:
            raise ValueError("need alpha_hat * alpha0 < 1 for a positive stepsize")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        if self.iterations < 1 or self.j_base < 1:
            raise ValueError("iterations and j_base must be >= 1")


@dataclass
class AlmConfig:
    iterations: int
    mu: float = 2.0          # 0 gives the plain augmented Lagrangian method
    rho: float = 1.0
    tau: float = 0.01
    eta: float = 0.05
    beta_smooth: float = 0.5
    M_y: float = 10.0

    def __post_init__(self):
        if self.mu < 0 or self.rho < 0:
            raise ValueError("mu and rho must be >= 0")
        if self.tau <= 0 or self.eta < 0 or self.M_y <= 0:
            raise ValueError("tau, M_y must be > 0 and eta >= 0")
        if not 0.0 < self.beta_smooth <= 1.0:
            raise ValueError("beta_smooth must lie in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class SswConfig:
    iterations: int
    eta_f: float = 0.5
    eta_c: float = 0.05
    eps0: float = 1e-4
    switch_iter: int = 500
    decay: float = 0.97
    batch: int = 8
    k0: int = 0

    def __post_init__(self):
        if self.eta_f <= 0 or self.eta_c <= 0:
            raise ValueError("stepsizes must be > 0")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch < 1 or self.iterations < 1:
            raise ValueError("batch and iterations must be >= 1")
        if not 0 <= self.k0 < self.iterations:
            raise ValueError("need 0 <= k0 < iterations (otherwise no output is recorded)")

    def eps(self, k: int) -> float:
        return self.eps0 * self.decay ** max(0, k - self.switch_iter)


@dataclass
class SgdConfig:
    iterations: int
    lr: float = 0.1
    batch: int = 32

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch < 1 or self.iterations < 1:
            raise ValueError("batch and iterations must be >= 1")


class _RunClock:
    """Wall clock for the optimization work only; logging pauses it."""

    def __init__(self):
        self.elapsed = 0.0
        self._t0 = None

    def start(self):
        self._t0 = time.perf_counter()

    def pause(self):
        self.elapsed += time.perf_counter() - self._t0
        self._t0 = None


def _log(logger, problem, clock, k, x):
    if logger is None:
        return
    tr_loss, tr_cons, te_loss, te_cons = problem.log_eval(x)
    logger(k, clock.elapsed, tr_loss, tr_cons, te_loss, te_cons)


def run_stgh(problem, x0: np.ndarray, cfg: StGhConfig, rng: np.random.Generator,
             logger=None, log_every: int = LOG_EVERY) -> np.ndarray:
    """Stochastic ghost method: x_{k+1} = x_k + alpha_k d(x_k) with the MLMC
    direction estimate and the stepsize recurrence
    alpha_{k+1} = alpha_k (1 - alpha_hat * alpha_k).

    A failed subproblem solve skips the iteration (x unchanged); more than 1%
    of iterations skipping aborts the run.
    """
    x = np.array(x0, dtype=np.float64)
    alpha = cfg.alpha0
    skip_budget = max(1, int(0.01 * cfg.iterations))
    skips = 0
    clock = _RunClock()
    _log(logger, problem, clock, 0, x)
    for k in range(cfg.iterations):
        clock.start()
        try:
            d = mlmc_direction(problem, x, cfg.p0, rng, tau=cfg.tau, beta=cfg.beta,
                               lam=cfg.lam, j_base=cfg.j_base)
            x = x + alpha * d
        except QpSolveError as err:
            skips += 1
            if skips > skip_budget:
                clock.pause()
                raise RuntimeError(
                    f"stochastic ghost aborted: {skips} skipped iterations "
                    f"exceed the 1% budget ({err})"
                ) from err
        alpha = alpha * (1.0 - cfg.alpha_hat * alpha)
        clock.pause()
        if (k + 1) % log_every == 0 or k + 1 == cfg.iterations:
            _log(logger, problem, clock, k + 1, x)
    return x


def run_ssl_alm(problem, x0: np.ndarray, cfg: AlmConfig, rng: np.random.Generator,
                logger=None, log_every: int = LOG_EVERY, state_hook=None) -> np.ndarray:
    """Stochastic smoothed and linearized augmented Lagrangian method.

    Inequalities c(x) <= 0 are driven through slack variables s >= 0 appended
    to the iterate (equality target c(x) + s = 0); the projection clamps the
    slack block at zero.  Per iteration, independent draws xi, zeta1, zeta2
    feed the stationary estimate

        G = grad f(xi) + J(zeta1)^T [y + rho (c(zeta2) + s)] + mu ((x,s) - z)

    with the slack block of the Jacobian being the identity, after the
    multiplier update y += eta (c(zeta1) + s) and its reset to 0 whenever
    ||y|| >= M_y.  The anchor follows z += beta_smooth ((x,s)_old - z).
    mu = 0 runs the plain ALM from this same code path.

    state_hook(k, x, slack, y), when given, observes the state after each
    iteration (diagnostics and tests).
    """
    n, m = problem.dim, problem.n_constraints
    xs = np.concatenate([np.asarray(x0, dtype=np.float64), np.zeros(m)])
    y = np.zeros(m)
    z = xs.copy()
    clock = _RunClock()
    _log(logger, problem, clock, 0, xs[:n])
    for k in range(cfg.iterations):
        clock.start()
        x, s = xs[:n], xs[n:]
        _, f_grad = problem.objective_batch(x, 1, rng)
        c1, jac1 = problem.constraint_batch(x, 1, rng)
        c2 = problem.constraint_values(x, 1, rng)
        y = y + cfg.eta * (c1 + s)
        if np.linalg.norm(y) >= cfg.M_y:
            y = np.zeros(m)
        w = y + cfg.rho * (c2 + s)
        g_x = f_grad + jac1.T @ w + cfg.mu * (x - z[:n])
        g_s = w + cfg.mu * (s - z[n:])
        xs_old = xs
        xs = xs - cfg.tau * np.concatenate([g_x, g_s])
        xs[n:] = np.maximum(xs[n:], 0.0)
        z = z + cfg.beta_smooth * (xs_old - z)
        clock.pause()
        if state_hook is not None:
            state_hook(k, xs[:n], xs[n:], y)
        if (k + 1) % log_every == 0 or k + 1 == cfg.iterations:
            _log(logger, problem, clock, k + 1, xs[:n])
    return xs[:n]


def run_alm(problem, x0: np.ndarray, cfg: AlmConfig, rng: np.random.Generator,
            logger=None, log_every: int = LOG_EVERY) -> np.ndarray:
    """Plain augmented Lagrangian method: SSL-ALM with the smoothing removed."""
    if cfg.mu != 0.0:
        cfg = AlmConfig(iterations=cfg.iterations, mu=0.0, rho=cfg.rho, tau=cfg.tau,
                        eta=cfg.eta, beta_smooth=cfg.beta_smooth, M_y=cfg.M_y)
    return run_ssl_alm(problem, x0, cfg, rng, logger=logger, log_every=log_every)


def stepsize_weighted_choice(weight, total_weight, rng) -> bool:
    """Single-slot weighted reservoir step: keep the new item with probability
    weight / total_weight (total includes the new weight).  Over a stream this
    selects item k with probability weight_k / sum of weights, exactly."""
    return rng.random() * total_weight < weight


def run_ssw(problem, x0: np.ndarray, cfg: SswConfig, rng: np.random.Generator,
            logger=None, log_every: int = LOG_EVERY, state_hook=None) -> np.ndarray:
    """Stochastic switching subgradient method.

    Each iteration draws a J-point constraint estimate; if its largest
    component is within the tolerance eps_k the iterate takes an objective
    subgradient step with eta_f, otherwise a subgradient step on the most
    violated component with eta_c.  The step estimates S^f and S^c are fresh
    J-point mini-batch means as well (J = 1 recovers singleton draws).
    Iterates with k >= k0 are recorded with the stepsize they used and the
    output is one recorded iterate drawn with stepsize-proportional
    probability (kept as a one-slot weighted reservoir).
    """
    x = np.array(x0, dtype=np.float64)
    total_weight = 0.0
    chosen = None
    clock = _RunClock()
    _log(logger, problem, clock, 0, x)
    for k in range(cfg.iterations):
        clock.start()
        cbar = problem.constraint_values(x, cfg.batch, rng)
        feasible = float(cbar.max()) <= cfg.eps(k)
        x_pre = x
        if feasible:
            _, grad = problem.objective_batch(x, cfg.batch, rng)
            x = x - cfg.eta_f * grad
            used = cfg.eta_f
        else:
            worst = int(np.argmax(cbar))
            _, jac = problem.constraint_batch(x, cfg.batch, rng)
            x = x - cfg.eta_c * jac[worst]
            used = cfg.eta_c
        if k >= cfg.k0:
            total_weight += used
            if stepsize_weighted_choice(used, total_weight, rng):
                chosen = x_pre
        clock.pause()
        if state_hook is not None:
            state_hook(k, feasible, cfg.eps(k), x)
        if (k + 1) % log_every == 0 or k + 1 == cfg.iterations:
            _log(logger, problem, clock, k + 1, x)
    if chosen is None:
        raise RuntimeError("no iterate was recorded (k0 >= iterations)")
    return chosen


def run_sgd(problem, x0: np.ndarray, cfg: SgdConfig, rng: np.random.Generator,
            logger=None, log_every: int = LOG_EVERY) -> np.ndarray:
    """Mini-batch SGD on the problem's (optionally penalized) objective."""
    x = np.array(x0, dtype=np.float64)
    clock = _RunClock()
    _log(logger, problem, clock, 0, x)
    for k in range(cfg.iterations):
        clock.start()
        _, grad = problem.objective_batch(x, cfg.batch, rng)
        x = x - cfg.lr * grad
        clock.pause()
        if (k + 1) % log_every == 0 or k + 1 == cfg.iterations:
            _log(logger, problem, clock, k + 1, x)
    return x
