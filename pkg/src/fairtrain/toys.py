"""Desk-scale synthetic problems exercising the optimizer interfaces.

NoisyConstrainedQuadratic is the clean testbed: a strongly convex quadratic
with linear inequality constraints and additive Gaussian noise on every
oracle output.  Batch means are drawn directly at their exact distribution
(a mean of J iid normals is a normal at scale sigma/sqrt(J)), which keeps
arbitrarily large mini-batches O(1).  With sigma = 0 every oracle is exact,
which pins down zero-variance behaviour in tests.
"""

from __future__ import annotations

import numpy as np

from .data import GroupedDataset
from .net import NetworkSpec
from .problem import ConstraintSpec, FairnessProblem, GhostStats


class NoisyConstrainedQuadratic:
    """min 0.5 ||x - target||^2  s.t.  A x <= b, with noisy sampling oracles."""

    def __init__(self, target, cons_A, cons_b, sigma=0.1):
        self.target = np.asarray(target, dtype=np.float64)
        self.A = np.atleast_2d(np.asarray(cons_A, dtype=np.float64))
        self.b = np.asarray(cons_b, dtype=np.float64)
        self.sigma = float(sigma)

    @property
    def dim(self) -> int:
        return self.target.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.b.shape[0]

    # exact quantities
    def f(self, x) -> float:
        return 0.5 * float(np.sum((x - self.target) ** 2))

    def c(self, x) -> np.ndarray:
        return self.A @ x - self.b

    def log_eval(self, x):
        return self.f(x), self.c(x), self.f(x), self.c(x)

    # sampling oracles: additive N(0, sigma^2/J) noise on every output
    def _noise(self, rng, shape, J):
        if self.sigma == 0.0:
            return np.zeros(shape)
        return rng.standard_normal(shape) * (self.sigma / np.sqrt(J))

    def objective_batch(self, x, J, rng):
        grad = (x - self.target) + self._noise(rng, self.dim, J)
        value = self.f(x) + float(self._noise(rng, (), J))
        return value, grad

    def constraint_batch(self, x, J, rng):
        vals = self.c(x) + self._noise(rng, self.n_constraints, J)
        jac = self.A + self._noise(rng, self.A.shape, J)
        return vals, jac

    def constraint_values(self, x, J, rng):
        return self.c(x) + self._noise(rng, self.n_constraints, J)

    def _ghost(self, x, J, rng):
        f_grad = (x - self.target) + self._noise(rng, self.dim, J)
        cons_val = self.c(x) + self._noise(rng, self.n_constraints, J)
        cons_jac = self.A + self._noise(rng, self.A.shape, J)
        return GhostStats(f_grad=f_grad, cons_val=cons_val, cons_jac=cons_jac)

    def ghost_batch(self, x, J, rng):
        return self._ghost(x, J, rng)

    def ghost_batch_pair(self, x, J, rng):
        return self._ghost(x, J, rng), self._ghost(x, J, rng)


def halfspace_toy(sigma: float = 0.1) -> NoisyConstrainedQuadratic:
    """min 0.5 ||x - (2, 2)||^2  s.t.  x1 + x2 <= 1; solution (0.5, 0.5)."""
    return NoisyConstrainedQuadratic(target=[2.0, 2.0], cons_A=[[1.0, 1.0]],
                                     cons_b=[1.0], sigma=sigma)


def equality_toy(sigma: float = 0.0) -> NoisyConstrainedQuadratic:
    """min 0.5 ||x||^2 s.t. x1 = 1 (as the pair x1 - 1 <= 0, 1 - x1 <= 0);
    solution (1, 0, 0)."""
    return NoisyConstrainedQuadratic(
        target=[0.0, 0.0, 0.0],
        cons_A=[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        cons_b=[1.0, -1.0],
        sigma=sigma,
    )


def eight_point_problem(delta: float = 0.05) -> FairnessProblem:
    """Fixed 8-row, 2-group logistic problem (one feature + bias, 2 parameters)
    with a loss-gap constraint; small enough to evaluate against full-batch
    ground truth."""
    X = np.array([[-1.6], [-0.8], [-0.2], [0.4], [0.7], [1.1], [1.8], [2.3]])
    y = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0])
    g = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    ds = GroupedDataset(X=X, y=y, g=g, group_names=["a", "b"])
    idx = np.arange(8)
    spec = NetworkSpec(input_dim=1, hidden_dims=())
    cons = ConstraintSpec(kind="loss_gap", delta=delta, group_pair=(0, 1))
    return FairnessProblem(spec, ds, train_idx=idx, test_idx=idx, constraints=cons)
