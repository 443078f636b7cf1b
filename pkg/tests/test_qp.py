import itertools

import numpy as np
import pytest
from scipy import stats

from fairtrain.problem import GhostStats
from fairtrain.qp import (
    GhostSubproblem,
    QpSolveError,
    compute_kappa,
    feasibility_value,
    mlmc_direction,
    sample_geometric,
    solve_ghost_qp,
)
from fairtrain.toys import NoisyConstrainedQuadratic, halfspace_toy


def enumerate_qp_oracle(g, c, A, tau, beta, kappa):
    """Global optimum by enumerating all box-activity x constraint-activity
    patterns of the KKT system.  Returns (d, objective)."""
    n, m = g.shape[0], c.shape[0]
    best, best_obj = None, np.inf
    for box_pat in itertools.product((-1, 0, 1), repeat=n):
        free = [i for i, p in enumerate(box_pat) if p == 0]
        for act in itertools.chain.from_iterable(
                itertools.combinations(range(m), r) for r in range(m + 1)):
            act = list(act)
            d = np.array([p * beta for p in box_pat], dtype=float)
            nf, na = len(free), len(act)
            if nf + na:
                K = np.zeros((nf + na, nf + na))
                rhs = np.zeros(nf + na)
                K[:nf, :nf] = tau * np.eye(nf)
                for col, j in enumerate(act):
                    K[:nf, nf + col] = A[j, free]
                for row, j in enumerate(act):
                    K[nf + row, :nf] = A[j, free]
                # stationarity on free coords: g + tau d + A^T mu = 0
                fixed = [i for i in range(n) if i not in free]
                rhs[:nf] = -g[free]
                for row, j in enumerate(act):
                    rhs[nf + row] = kappa - c[j] - A[j, fixed] @ d[fixed]
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    continue
                d[free] = sol[:nf]
                mu = sol[nf:]
            else:
                mu = np.zeros(0)
            if np.any(np.abs(d) > beta + 1e-9):
                continue
            if na and np.any(mu < -1e-9):
                continue
            if np.any(c + A @ d > kappa + 1e-7):
                continue
            # box multiplier signs on fixed coordinates
            s = g + tau * d + (A[act].T @ mu if na else 0.0)
            ok = True
            for i, p in enumerate(box_pat):
                if p == 1 and s[i] > 1e-9:
                    ok = False
                if p == -1 and s[i] < -1e-9:
                    ok = False
            if not ok:
                continue
            obj = g @ d + 0.5 * tau * d @ d
            if obj < best_obj - 1e-12:
                best_obj, best = obj, d.copy()
    return best, best_obj


class TestComputeKappa:
    def test_all_feasible_gives_zero(self):
        c = np.array([-0.5, -0.1])
        A = np.random.default_rng(0).standard_normal((2, 3))
        assert compute_kappa(c, A, beta=1.0, lam=0.5) == 0.0

    def test_constraint_independent_of_d(self):
        c = np.array([1.0])
        A = np.zeros((1, 4))
        for lam in (0.1, 0.5, 0.9):
            assert compute_kappa(c, A, beta=7.0, lam=lam) == pytest.approx(1.0)

    def test_2d_grid_oracle(self):
        # optimum designed to land on the lattice
        c = np.array([0.5, 0.5])
        A = np.array([[1.0, 0.0], [-1.0, 0.0]])
        beta = 1.0
        xs = np.linspace(-beta, beta, 2001)
        Dx, Dy = np.meshgrid(xs, xs, indexing="ij")
        D = np.stack([Dx.ravel(), Dy.ravel()], axis=1)
        vals = np.maximum(c + D @ A.T, 0.0).max(axis=1)
        theta_grid = vals.min()
        theta = feasibility_value(c, A, beta)
        assert abs(theta - theta_grid) < 1e-6
        kappa = compute_kappa(c, A, beta, lam=0.5)
        assert abs(kappa - (0.5 * theta_grid + 0.5 * 0.5)) < 1e-6

    def test_matches_linprog_fallback_on_m2(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            c = rng.standard_normal(2)
            A = rng.standard_normal((2, 4))
            beta = rng.uniform(0.2, 3.0)
            fast = feasibility_value(c, A, beta)
            # third, vacuous constraint routes through the LP path
            slow = feasibility_value(np.r_[c, -1e9], np.vstack([A, np.zeros(4)]), beta)
            assert fast == pytest.approx(slow, abs=1e-7)

    def test_monotone_in_beta(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            m = rng.integers(1, 4)
            c = rng.standard_normal(m)
            A = rng.standard_normal((m, 3))
            betas = np.sort(rng.uniform(0.1, 5.0, size=4))
            kappas = [compute_kappa(c, A, b, 0.5) for b in betas]
            assert all(k1 >= k2 - 1e-12 for k1, k2 in zip(kappas, kappas[1:]))

    def test_lam_bounds(self):
        with pytest.raises(ValueError):
            compute_kappa(np.array([1.0]), np.zeros((1, 2)), 1.0, 0.0)


class TestSolveGhostQp:
    def test_unconstrained_box_case(self):
        g = np.array([3.0, -0.2, 0.0])
        p = GhostSubproblem(grad=g, cons_val=np.zeros(0), cons_jac=np.zeros((0, 3)),
                            tau=2.0, beta=1.0, kappa=0.0)
        sol = solve_ghost_qp(p)
        assert sol.optimal
        assert np.allclose(sol.d, np.clip(-g / 2.0, -1.0, 1.0))

    def test_zero_grad_feasible_origin(self):
        p = GhostSubproblem(grad=np.zeros(2), cons_val=np.array([-1.0]),
                            cons_jac=np.array([[1.0, 1.0]]), tau=1.0, beta=1.0,
                            kappa=0.0)
        sol = solve_ghost_qp(p)
        assert sol.optimal and np.allclose(sol.d, 0.0)

    @pytest.mark.parametrize("trial", range(40))
    def test_matches_enumeration_oracle(self, trial):
        rng = np.random.default_rng(1000 + trial)
        n = int(rng.integers(1, 5))
        m = int(rng.integers(0, 4))
        g = rng.standard_normal(n)
        A = rng.standard_normal((m, n))
        c = rng.standard_normal(m)
        tau = rng.uniform(0.5, 2.0)
        beta = rng.uniform(0.5, 2.0)
        kappa = compute_kappa(c, A, beta, 0.5) if m else 0.0
        sol = solve_ghost_qp(GhostSubproblem(grad=g, cons_val=c, cons_jac=A,
                                             tau=tau, beta=beta, kappa=kappa))
        assert sol.optimal
        _, ref_obj = enumerate_qp_oracle(g, c, A, tau, beta, kappa)
        got = g @ sol.d + 0.5 * tau * sol.d @ sol.d
        assert got == pytest.approx(ref_obj, abs=1e-6)

    def test_solution_unique_across_multiplier_inits(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = rng.standard_normal(3)
            A = rng.standard_normal((2, 3))
            c = rng.standard_normal(2)
            kappa = compute_kappa(c, A, 1.0, 0.5)
            p = GhostSubproblem(grad=g, cons_val=c, cons_jac=A, tau=1.0, beta=1.0,
                                kappa=kappa)
            d0 = solve_ghost_qp(p).d
            d1 = solve_ghost_qp(p, mu0=rng.uniform(0, 5, size=2)).d
            assert np.linalg.norm(d0 - d1, np.inf) < 1e-6

    def test_complementary_slackness(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            g = rng.standard_normal(4)
            A = rng.standard_normal((3, 4))
            c = rng.standard_normal(3)
            kappa = compute_kappa(c, A, 1.5, 0.5)
            sol = solve_ghost_qp(GhostSubproblem(grad=g, cons_val=c, cons_jac=A,
                                                 tau=1.0, beta=1.5, kappa=kappa))
            slack = c + A @ sol.d - kappa
            assert np.all(np.abs(sol.multipliers * slack) < 1e-6)
            assert np.all(np.abs(sol.d) <= 1.5 + 1e-9)
            assert np.all(slack <= 1e-7)

    def test_infeasible_instance_reported(self):
        # zero Jacobian rows cannot move an already violated constraint
        p = GhostSubproblem(grad=np.ones(2), cons_val=np.array([1.0]),
                            cons_jac=np.zeros((1, 2)), tau=1.0, beta=1.0,
                            kappa=0.0)
        sol = solve_ghost_qp(p, max_iter=500)
        assert sol.status == "infeasible"
        assert sol.kkt_residual > 0


class TestMlmcDirection:
    def test_zero_variance_equals_full_batch(self):
        toy = halfspace_toy(sigma=0.0)
        x = np.array([2.0, 2.0])
        rng = np.random.default_rng(0)
        stats0 = toy.ghost_batch(x, 1, rng)
        kappa = compute_kappa(stats0.cons_val, stats0.cons_jac, 10.0, 0.5)
        ref = solve_ghost_qp(GhostSubproblem(
            grad=stats0.f_grad, cons_val=stats0.cons_val, cons_jac=stats0.cons_jac,
            tau=1.0, beta=10.0, kappa=kappa)).d
        for seed in range(5):
            d = mlmc_direction(toy, x, 0.4, np.random.default_rng(seed),
                               tau=1.0, beta=10.0, lam=0.5)
            assert np.array_equal(d, ref)

    def test_geometric_pmf_chi_square(self):
        rng = np.random.default_rng(1)
        p0 = 0.4
        draws = np.array([sample_geometric(rng, p0) for _ in range(10_000)])
        kmax = 10
        observed = np.bincount(np.minimum(draws, kmax), minlength=kmax + 1)
        pmf = (1 - p0) ** np.arange(kmax + 1) * p0
        pmf[kmax] = (1 - p0) ** kmax  # tail mass lumped into the last bin
        _, pval = stats.chisquare(observed, pmf * draws.size)
        assert pval > 0.01

    def test_solver_failure_propagates(self):
        class BadKappaOracle:
            dim = 2
            n_constraints = 1

            def ghost_batch(self, x, J, rng):
                return GhostStats(f_grad=np.ones(2), cons_val=np.array([1.0]),
                                  cons_jac=np.zeros((1, 2)))

            def ghost_batch_pair(self, x, J, rng):
                return self.ghost_batch(x, J, rng), self.ghost_batch(x, J, rng)

        with pytest.raises(QpSolveError):
            mlmc_direction(BadKappaOracle(), np.zeros(2), 0.4,
                           np.random.default_rng(0), tau=1.0, beta=1.0, lam=0.5,
                           max_iter=200)

    def test_unbiased_on_tiny_stochastic_problem(self):
        # smaller replica of the acceptance check (full run lives there)
        from fairtrain.toys import eight_point_problem
        prob = eight_point_problem(delta=0.05)
        x = np.array([0.8, -0.3])
        idx = np.arange(8)
        from fairtrain import net as nets
        _, f_grad = nets.loss_and_grad(prob.spec, x, prob.ds.X[idx], prob.ds.y[idx])
        vals, grads = {}, {}
        for cell in prob._cells:
            vals[cell], grads[cell] = prob._cell_loss_grad(x, prob._rows_in(idx, cell))
        cons_val, cons_jac = prob._assemble(vals, grads)
        kappa = compute_kappa(cons_val, cons_jac, 10.0, 0.5)
        ref = solve_ghost_qp(GhostSubproblem(grad=f_grad, cons_val=cons_val,
                                             cons_jac=cons_jac, tau=1.0, beta=10.0,
                                             kappa=kappa)).d
        rng = np.random.default_rng(2)
        draws = np.array([mlmc_direction(prob, x, 0.4, rng, tau=1.0, beta=10.0,
                                         lam=0.5) for _ in range(4000)])
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - ref) < 4 * se)
