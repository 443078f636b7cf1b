"""Stochastic oracles for fairness-constrained empirical risk minimization.

A FairnessProblem turns (network, dataset, constraint choice) into sampled
estimates of the objective, the constraint vector and their gradients.  The
two-sided loss-gap bound |gap| <= b is encoded as the one-sided pair
(gap - b, -gap - b); equalized odds emits one such pair per label value with
bound delta/2 each, keeping every component smooth.

Constraint samples are drawn group-balanced: one data point per sampling cell
per sample, cells being (group,) or (group, label) depending on the
formulation.  Objective samples are uniform over the training rows.  All
estimates are plain means of iid per-sample quantities, so halves of a batch
average exactly to the full batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net as nets
from .data import EmptyCellError, GroupedDataset

CONSTRAINT_KINDS = ("loss_gap", "equal_opportunity", "equalized_odds")

_GHOST_CHUNK = 1 << 15  # samples per evaluation chunk when batching huge draws


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    delta: float
    group_pair: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"kind must be one of {CONSTRAINT_KINDS}, got {self.kind!r}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.group_pair[0] == self.group_pair[1]:
            raise ValueError("group_pair must name two distinct groups")

    def gap_defs(self) -> list["GapDef"]:
        a, b = self.group_pair
        if self.kind == "loss_gap":
            return [GapDef(a, b, None, self.delta)]
        if self.kind == "equal_opportunity":
            return [GapDef(a, b, 1.0, self.delta)]
        return [GapDef(a, b, 1.0, self.delta / 2.0), GapDef(a, b, 0.0, self.delta / 2.0)]


@dataclass(frozen=True)
class GapDef:
    """One loss gap mean_cell(A) - mean_cell(B), bounded by +-bound."""

    group_a: int
    group_b: int
    label: float | None
    bound: float

    @property
    def cells(self) -> tuple[tuple[int, float | None], tuple[int, float | None]]:
        return (self.group_a, self.label), (self.group_b, self.label)


@dataclass
class ObjectiveEstimate:
    value: float
    gradient: np.ndarray


@dataclass
class ConstraintEstimate:
    values: np.ndarray    # (m,)
    jacobian: np.ndarray  # (m, n)


@dataclass
class GhostStats:
    """Batch means of the joint (objective-gradient, constraint, Jacobian) samples."""

    f_grad: np.ndarray
    cons_val: np.ndarray
    cons_jac: np.ndarray


def _mean_stats(a: GhostStats, b: GhostStats) -> GhostStats:
    return GhostStats(
        f_grad=0.5 * (a.f_grad + b.f_grad),
        cons_val=0.5 * (a.cons_val + b.cons_val),
        cons_jac=0.5 * (a.cons_jac + b.cons_jac),
    )


class FairnessProblem:
    """Sampled objective/constraint oracles over a grouped dataset.

    Parameters are the flat network weights.  Constraint batches are drawn
    from the training rows only.  With penalty_lambda > 0 the objective gains
    the differentiable fairness penalty lambda * gap^2 per configured gap
    (the generic stand-in for a regularizer-based baseline); constrained
    algorithms use problems built with penalty_lambda = 0.
    """

    def __init__(self, spec: nets.NetworkSpec, ds: GroupedDataset,
                 train_idx: np.ndarray, test_idx: np.ndarray,
                 constraints: ConstraintSpec | list[ConstraintSpec],
                 penalty_lambda: float = 0.0, penalty_batch: int = 8):
        self.spec = spec
        self.ds = ds
        self.train_idx = np.asarray(train_idx)
        self.test_idx = np.asarray(test_idx)
        if isinstance(constraints, ConstraintSpec):
            constraints = [constraints]
        self.constraints = list(constraints)
        self.gaps = [g for c in self.constraints for g in c.gap_defs()]
        if penalty_lambda < 0:
            raise ValueError("penalty_lambda must be >= 0")
        self.penalty_lambda = float(penalty_lambda)
        self.penalty_batch = int(penalty_batch)

        # distinct sampling cells, resolved against the training rows
        self._cells: list[tuple[int, float | None]] = []
        for gap in self.gaps:
            for cell in gap.cells:
                if cell not in self._cells:
                    self._cells.append(cell)
        self._cell_rows = {cell: self._rows_in(self.train_idx, cell) for cell in self._cells}
        for cell, rows in self._cell_rows.items():
            if rows.size == 0:
                raise EmptyCellError(f"empty training cell {self._cell_name(cell)}")

    # -- structure ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.spec.param_count

    @property
    def n_constraints(self) -> int:
        return 2 * len(self.gaps)

    def _cell_name(self, cell: tuple[int, float | None]) -> str:
        gid, label = cell
        name = self.ds.group_names[gid]
        return f"(group {name!r})" if label is None else f"(group {name!r}, Y={int(label)})"

    def _rows_in(self, idx: np.ndarray, cell: tuple[int, float | None]) -> np.ndarray:
        gid, label = cell
        mask = self.ds.g[idx] == gid
        if label is not None:
            mask &= self.ds.y[idx] == label
        return idx[mask]

    # -- objective ---------------------------------------------------------

    def objective_batch(self, params: np.ndarray, J: int,
                        rng: np.random.Generator) -> tuple[float, np.ndarray]:
        """Mean BCE and gradient over J uniform training samples (plus penalty)."""
        rows = self.train_idx[rng.integers(0, self.train_idx.size, size=J)]
        value, grad = nets.loss_and_grad(self.spec, params, self.ds.X[rows], self.ds.y[rows])
        if self.penalty_lambda > 0.0:
            gaps, gap_grads = self._sample_gaps(params, self.penalty_batch, rng)
            value += self.penalty_lambda * float(np.sum(gaps**2))
            grad = grad + 2.0 * self.penalty_lambda * gap_grads.T @ gaps
        return value, grad

    def objective_estimate(self, params: np.ndarray, batch: np.ndarray) -> ObjectiveEstimate:
        """Estimate over an explicit index batch (penalty requires sampling,
        so it is only added through objective_batch)."""
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("empty objective batch")
        value, grad = nets.loss_and_grad(self.spec, params, self.ds.X[batch], self.ds.y[batch])
        return ObjectiveEstimate(value=value, gradient=grad)

    # -- constraints -------------------------------------------------------

    def _draw_cell_indices(self, J: int, rng: np.random.Generator) -> dict:
        return {
            cell: rows[rng.integers(0, rows.size, size=J)]
            for cell, rows in self._cell_rows.items()
        }

    def _cell_loss_grad(self, params, rows) -> tuple[float, np.ndarray]:
        return nets.loss_and_grad(self.spec, params, self.ds.X[rows], self.ds.y[rows])

    def _cell_loss(self, params, rows) -> float:
        logits, _ = nets.forward(self.spec, params, self.ds.X[rows])
        return nets.bce_loss(logits, self.ds.y[rows])

    def _assemble(self, cell_vals: dict, cell_grads: dict | None):
        """Gap means/cells -> stacked one-sided components (and Jacobian rows)."""
        m = self.n_constraints
        values = np.empty(m)
        jac = np.empty((m, self.dim)) if cell_grads is not None else None
        for i, gap in enumerate(self.gaps):
            ca, cb = gap.cells
            gval = cell_vals[ca] - cell_vals[cb]
            values[2 * i] = gval - gap.bound
            values[2 * i + 1] = -gval - gap.bound
            if jac is not None:
                grow = cell_grads[ca] - cell_grads[cb]
                jac[2 * i] = grow
                jac[2 * i + 1] = -grow
        return values, jac

    def constraint_estimate(self, params: np.ndarray,
                            grouped_batch: dict) -> ConstraintEstimate:
        """Estimate from explicit per-cell index arrays (keys (group, label))."""
        for cell in self._cells:
            if cell not in grouped_batch or np.asarray(grouped_batch[cell]).size == 0:
                raise EmptyCellError(f"missing cell {self._cell_name(cell)} in batch")
        vals = {c: self._cell_loss(params, np.asarray(grouped_batch[c])) for c in self._cells}
        grads = {}
        for c in self._cells:
            _, grads[c] = self._cell_loss_grad(params, np.asarray(grouped_batch[c]))
        values, jac = self._assemble(vals, grads)
        return ConstraintEstimate(values=values, jacobian=jac)

    def constraint_batch(self, params: np.ndarray, J: int,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sampled constraint components and Jacobian, J points per cell."""
        cells = self._draw_cell_indices(J, rng)
        vals, grads = {}, {}
        for c in self._cells:
            vals[c], grads[c] = self._cell_loss_grad(params, cells[c])
        return self._assemble(vals, grads)

    def constraint_values(self, params: np.ndarray, J: int,
                          rng: np.random.Generator) -> np.ndarray:
        """Sampled constraint components only (no gradients)."""
        cells = self._draw_cell_indices(J, rng)
        vals = {c: self._cell_loss(params, cells[c]) for c in self._cells}
        values, _ = self._assemble(vals, None)
        return values

    def _sample_gaps(self, params: np.ndarray, J: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sampled raw gap values and gradients (penalty term plumbing)."""
        cells = self._draw_cell_indices(J, rng)
        vals, grads = {}, {}
        for c in self._cells:
            vals[c], grads[c] = self._cell_loss_grad(params, cells[c])
        gaps = np.empty(len(self.gaps))
        ggrads = np.empty((len(self.gaps), self.dim))
        for i, gap in enumerate(self.gaps):
            ca, cb = gap.cells
            gaps[i] = vals[ca] - vals[cb]
            ggrads[i] = grads[ca] - grads[cb]
        return gaps, ggrads

    # -- joint ghost samples (objective + constraint per element) ----------

    def ghost_batch(self, params: np.ndarray, J: int,
                    rng: np.random.Generator) -> GhostStats:
        """Means over J joint samples: each element pairs one uniform objective
        point with one point per constraint cell."""
        obj_rows = self.train_idx[rng.integers(0, self.train_idx.size, size=J)]
        cells = self._draw_cell_indices(J, rng)
        return self._ghost_from_rows(params, obj_rows, cells)

    def ghost_batch_pair(self, params: np.ndarray, J: int,
                         rng: np.random.Generator) -> tuple[GhostStats, GhostStats]:
        """Draw 2J joint samples in sequence; return (even-, odd-indexed) means.

        Index draws happen up front (one generator consumption pattern); the
        evaluation itself is chunked, so huge halves keep memory bounded.
        """
        obj_rows = self.train_idx[rng.integers(0, self.train_idx.size, size=2 * J)]
        cells = self._draw_cell_indices(2 * J, rng)
        even = self._ghost_from_rows(params, obj_rows[0::2],
                                     {c: v[0::2] for c, v in cells.items()})
        odd = self._ghost_from_rows(params, obj_rows[1::2],
                                    {c: v[1::2] for c, v in cells.items()})
        return even, odd

    def _mean_loss_grad_chunked(self, params, rows) -> tuple[float, np.ndarray]:
        J = rows.shape[0]
        if J <= _GHOST_CHUNK:
            return self._cell_loss_grad(params, rows)
        loss_sum, grad_sum = 0.0, np.zeros(self.dim)
        for lo in range(0, J, _GHOST_CHUNK):
            part = rows[lo:lo + _GHOST_CHUNK]
            loss, grad = self._cell_loss_grad(params, part)
            loss_sum += loss * part.shape[0]
            grad_sum += grad * part.shape[0]
        return loss_sum / J, grad_sum / J

    def _ghost_from_rows(self, params, obj_rows, cell_rows) -> GhostStats:
        _, f_grad = self._mean_loss_grad_chunked(params, obj_rows)
        vals, grads = {}, {}
        for c in self._cells:
            vals[c], grads[c] = self._mean_loss_grad_chunked(params, cell_rows[c])
        cons_val, cons_jac = self._assemble(vals, grads)
        return GhostStats(f_grad=f_grad, cons_val=cons_val, cons_jac=cons_jac)

    # -- deterministic evaluation ------------------------------------------

    def full_batch_eval(self, params: np.ndarray,
                        idx: np.ndarray) -> tuple[float, np.ndarray]:
        """Exact loss and constraint components over the given rows (no sampling)."""
        idx = np.asarray(idx)
        logits, _ = nets.forward(self.spec, params, self.ds.X[idx])
        loss = nets.bce_loss(logits, self.ds.y[idx])
        vals = {}
        for cell in self._cells:
            rows = self._rows_in(idx, cell)
            if rows.size == 0:
                raise EmptyCellError(f"empty cell {self._cell_name(cell)} in eval rows")
            vals[cell] = self._cell_loss(params, rows)
        values, _ = self._assemble(vals, None)
        return loss, values

    def log_eval(self, params: np.ndarray):
        """(train loss, train constraints, test loss, test constraints)."""
        tr_loss, tr_cons = self.full_batch_eval(params, self.train_idx)
        te_loss, te_cons = self.full_batch_eval(params, self.test_idx)
        return tr_loss, tr_cons, te_loss, te_cons

    def scores(self, params: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return nets.predict_scores(self.spec, params, self.ds.X[np.asarray(idx)])
