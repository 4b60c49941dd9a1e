import numpy as np
import pytest

from pdls import bsplit, linops, prox, solvers
from pdls.errors import LineSearchError, ParameterError

rng = np.random.default_rng(4242)


def tiny_lasso(n=30, lam=1.0, seed=0, with_split=True):
    r = np.random.default_rng(seed)
    mat = r.standard_normal((n, n))
    b = r.standard_normal(n)
    a = linops.from_matrix(mat)
    split = None
    if with_split:
        split = bsplit.build_dense_B(a, bsplit.default_theta(a))
    return solvers.SaddleProblem(
        f=prox.prox_sq_l2(b), g=prox.prox_l1(lam), a=a, split=split)


def scalar_problem(b=3.0, lam=1.0):
    # min 0.5 (x - b)^2 + lam |x| has the soft-threshold solution
    a = linops.from_matrix(np.array([[1.0]]))
    split = bsplit.build_dense_B(a, bsplit.default_theta(a))
    return solvers.SaddleProblem(
        f=prox.prox_sq_l2(np.array([b])), g=prox.prox_l1(lam), a=a, split=split)


def quadratic_problem(n=8, seed=1):
    # f quadratic, g = 0: every solver must drive x to b
    r = np.random.default_rng(seed)
    b = r.standard_normal(n)
    a = linops.identity(linops.Space((n,), "f"))
    split = bsplit.build_dense_B(a, 0.5)
    return solvers.SaddleProblem(
        f=prox.prox_sq_l2(b), g=prox.prox_zero(), a=a, split=split), b


class TestConfig:
    def test_defaults_valid(self):
        solvers.SolverConfig()

    def test_bad_params_rejected(self):
        for kw in ({"delta": 1.0}, {"mu": 0.0}, {"eps": 1.5}, {"tau0": -1.0},
                   {"alpha_bar": 0.0}, {"alpha_bar": 9.0, "alpha_max": 8.0},
                   {"rho": 2.0}, {"rho": 0.0}, {"max_iters": 0}, {"rtol": -0.1},
                   {"beta": 0.0}, {"eps_hat": 0.0}):
            with pytest.raises(ParameterError):
                solvers.SolverConfig(**kw)


class TestRunPdhg:
    def test_quadratic_reaches_b(self):
        prob, b = quadratic_problem()
        x, trace = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=200))
        assert np.linalg.norm(x - b) < 1e-8

    def test_scalar_soft_threshold_solution(self):
        prob = scalar_problem(b=3.0, lam=1.0)
        x, trace = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=2000))
        assert abs(x[0] - 2.0) < 1e-6

    def test_step_guard(self):
        prob = tiny_lasso(n=10, with_split=False)
        nrm = linops.op_norm_estimate(prob.a)
        cfg = solvers.SolverConfig(tau=1.0, sigma=2.0 / nrm ** 2, max_iters=5)
        with pytest.raises(ParameterError):
            solvers.run_pdhg(prob, cfg)

    def test_trace_well_formed(self):
        prob = tiny_lasso(n=12, with_split=False)
        x, trace = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=40))
        rows = trace.rows
        assert [r.iter for r in rows] == list(range(1, 41))
        objs = np.array([r.objective for r in rows])
        bests = np.array([r.best_objective for r in rows])
        assert np.all(np.isfinite(objs))
        assert np.allclose(bests, np.minimum.accumulate(objs))
        assert np.all(np.diff([r.elapsed_ms for r in rows]) >= 0)
        assert all(r.alpha == 0.5 for r in rows)  # rho = 1 logged on the 2alpha scale

    def test_deterministic(self):
        prob = tiny_lasso(n=12, with_split=False)
        _, t1 = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=30))
        _, t2 = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=30))
        assert [r.objective for r in t1.rows] == [r.objective for r in t2.rows]
        assert [r.residual_norm for r in t1.rows] == [r.residual_norm for r in t2.rows]

    def test_rtol_stops_early(self):
        prob, _ = quadratic_problem()
        x, trace = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=500, rtol=1e-6))
        assert len(trace.rows) < 500
        assert trace.rows[-1].residual_norm <= 1e-6 * trace.rows[0].residual_norm

    def test_callback_sees_each_iterate(self):
        prob = tiny_lasso(n=10, with_split=False)
        seen = []
        solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=7),
                         callback=lambda s: seen.append(s.x.copy()))
        assert len(seen) == 7

    def test_relaxed_converges(self):
        prob = scalar_problem(b=3.0, lam=1.0)
        cfg = solvers.SolverConfig(max_iters=2000, rho=1.8)
        x, trace = solvers.run_pdhg(prob, cfg)
        assert abs(x[0] - 2.0) < 1e-6
        assert all(r.alpha == 0.9 for r in trace.rows)


class TestStepLineSearch:
    def test_quadratic_reaches_b(self):
        prob, b = quadratic_problem()
        x, _ = solvers.run_pdhg_ls(prob, solvers.SolverConfig(max_iters=200))
        assert np.linalg.norm(x - b) < 1e-8

    def test_matches_long_fixed_step_objective(self):
        prob = tiny_lasso(n=20, seed=3)
        xref, tref = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=20000))
        x, t = solvers.run_pdhg_ls(prob, solvers.SolverConfig(max_iters=2000))
        ref = tref.rows[-1].best_objective
        assert abs(t.rows[-1].best_objective - ref) <= 1e-6 * abs(ref)

    def test_break_inequality_recomputed(self):
        # every accepted step satisfies the descent test
        # sqrt(beta) tau ||A*(z_k - z_{k-1})|| <= delta ||z_k - z_{k-1}||
        prob = tiny_lasso(n=15, seed=5)
        cfg = solvers.SolverConfig(max_iters=60)
        states = []
        solvers.run_pdhg_ls(prob, cfg, callback=lambda s: states.append((s.x.copy(), s.z.copy(), s.tau)))
        z_prev = np.zeros(15)
        for x, z, tau in states:
            dz = z - z_prev
            lhs = np.sqrt(cfg.beta) * tau * np.linalg.norm(prob.a.adjoint(dz))
            rhs = cfg.delta * np.linalg.norm(dz)
            assert lhs <= rhs * (1 + 1e-10) + 1e-15
            z_prev = z

    def test_tau_follows_candidate_schedule(self):
        # tau_k = tau_{k-1} sqrt(1 + theta_{k-1}) mu^backtracks
        prob = tiny_lasso(n=15, seed=6)
        cfg = solvers.SolverConfig(max_iters=60)
        x, trace = solvers.run_pdhg_ls(prob, cfg)
        taus = [cfg.tau0] + [r.tau for r in trace.rows]
        thetas = [1.0] + [taus[i + 1] / taus[i] for i in range(len(trace.rows))]
        for k, row in enumerate(trace.rows, start=1):
            first = taus[k - 1] * np.sqrt(1.0 + thetas[k - 1])
            expect = first * cfg.mu ** row.inner_backtracks
            assert abs(row.tau - expect) <= 1e-12 * expect

    def test_searched_step_unit(self):
        prob = tiny_lasso(n=10, seed=7)
        cfg = solvers.SolverConfig()
        state = solvers.initial_state(prob, cfg)
        new, bts = solvers.searched_step(prob, cfg, state, alpha=0.5)
        assert new.k == 1 and new.tau > 0 and bts >= 0
        # must equal the first iterate of the standalone loop
        x, trace = solvers.run_pdhg_ls(prob, solvers.SolverConfig(max_iters=1))
        assert np.array_equal(new.x, x) or np.allclose(new.x, x, atol=0)

    def test_search_failure_raises(self):
        prob = tiny_lasso(n=10, seed=8)
        cfg = solvers.SolverConfig(max_iters=50, delta=1e-9, max_inner_backtracks=5)
        with pytest.raises(LineSearchError):
            solvers.run_pdhg_ls(prob, cfg)


class TestPddrResidual:
    def test_zero_for_identical_states(self):
        prob = tiny_lasso(n=10, seed=9)
        x = rng.standard_normal(10)
        z = rng.standard_normal(10)
        r = solvers.pddr_residual(prob, x, z, x, z, 0.7)
        assert r.norm() == 0.0

    def test_matches_direct_mapping(self):
        prob = tiny_lasso(n=10, seed=10)
        x0, z0 = rng.standard_normal(10), rng.standard_normal(10)
        x1, z1 = rng.standard_normal(10), rng.standard_normal(10)
        tau = 0.9
        r = solvers.pddr_residual(prob, x0, z0, x1, z1, tau)
        a, b = prob.a, prob.split.b
        want0 = (x1 - tau * a.adjoint(z1)) - (x0 - tau * a.adjoint(z0))
        want1 = -tau * (b.adjoint(z1) - b.adjoint(z0))
        assert np.allclose(r.parts[0], want0, atol=1e-13)
        assert np.allclose(r.parts[1], want1, atol=1e-13)

    def test_requires_split(self):
        prob = tiny_lasso(n=6, with_split=False)
        with pytest.raises(ParameterError):
            solvers.pddr_residual(prob, np.zeros(6), np.zeros(6),
                                  np.zeros(6), np.zeros(6), 1.0)


class TestAoiPddr:
    def test_quadratic_reaches_b(self):
        prob, b = quadratic_problem()
        cfg = solvers.SolverConfig(max_iters=300)
        x, _ = solvers.run_aoi_pddr(prob, cfg)
        assert np.linalg.norm(x - b) < 1e-8

    def test_unrelaxed_matches_fixed_step_pdhg(self):
        # alpha pinned at 1/2 makes the y-iteration the plain unrelaxed
        # splitting, which must track fixed-step PDHG through the state map
        prob = tiny_lasso(n=25, seed=11)
        theta = prob.split.theta
        tau = 1.0
        ys = []
        cfg_a = solvers.SolverConfig(max_iters=50, tau0=tau, alpha_bar=0.5, alpha_max=0.5)
        solvers.run_aoi_pddr(prob, cfg_a, callback=lambda s: ys.append(s.y.copy()))
        pd = []
        cfg_p = solvers.SolverConfig(max_iters=50, tau=tau, sigma=theta / tau, rho=1.0)
        solvers.run_pdhg(prob, cfg_p, callback=lambda s: pd.append((s.x.copy(), s.z.copy())))
        a, b = prob.a, prob.split.b
        for y, (x, z) in zip(ys, pd):
            m0 = x - tau * a.adjoint(z)
            m1 = -tau * b.adjoint(z)
            gap = np.sqrt(np.linalg.norm(y.parts[0] - m0) ** 2
                          + np.linalg.norm(y.parts[1] - m1) ** 2)
            assert gap <= 1e-10 * max(1.0, np.linalg.norm(m0) + np.linalg.norm(m1))

    def test_accepted_alpha_in_range_and_inequality_logged(self):
        prob = tiny_lasso(n=20, seed=12)
        cfg = solvers.SolverConfig(max_iters=40)
        x, trace = solvers.run_aoi_pddr(prob, cfg)
        searched = 0
        for row in trace.rows:
            assert cfg.alpha_bar <= row.alpha <= cfg.alpha_max
            if row.alpha > cfg.alpha_bar:
                searched += 1
                assert row.residual_norm <= (1 - cfg.eps) * row.nominal_residual_norm
        assert searched > 0  # the search must actually win sometimes

    def test_demanding_acceptance_falls_back(self):
        prob = tiny_lasso(n=15, seed=13)
        cfg = solvers.SolverConfig(max_iters=10, eps=0.99)
        x, trace = solvers.run_aoi_pddr(prob, cfg)
        for row in trace.rows:
            assert row.alpha == cfg.alpha_bar
            assert row.outer_trials >= 1

    def test_requires_split(self):
        prob = tiny_lasso(n=6, with_split=False)
        with pytest.raises(ParameterError):
            solvers.run_aoi_pddr(prob, solvers.SolverConfig(max_iters=3))


class TestRpdhg:
    def test_degenerates_to_step_search_when_relaxation_disabled(self):
        prob = tiny_lasso(n=25, seed=14)
        cfg = solvers.SolverConfig(max_iters=50, alpha_bar=0.5, alpha_max=0.5)
        got = []
        solvers.run_rpdhg(prob, cfg, callback=lambda s: got.append((s.x.copy(), s.z.copy(), s.tau)))
        want = []
        cfg2 = solvers.SolverConfig(max_iters=50)
        solvers.run_pdhg_ls(prob, cfg2, callback=lambda s: want.append((s.x.copy(), s.z.copy(), s.tau)))
        for (xg, zg, tg), (xw, zw, tw) in zip(got, want):
            scale = max(1.0, np.linalg.norm(xw), np.linalg.norm(zw))
            assert np.linalg.norm(xg - xw) <= 1e-12 * scale
            assert np.linalg.norm(zg - zw) <= 1e-12 * scale
            assert abs(tg - tw) <= 1e-12 * tw

    def test_audit_invariants(self):
        # the relaxation search only starts winning once the fast modes
        # have damped out, so run well past the transient
        prob = tiny_lasso(n=25, seed=15)
        cfg = solvers.SolverConfig(max_iters=400)
        x, trace = solvers.run_rpdhg(prob, cfg)
        wins = 0
        for row in trace.rows:
            assert row.inner_backtracks <= cfg.max_inner_backtracks
            assert row.outer_trials <= cfg.max_outer_trials
            if row.alpha > cfg.alpha_bar:
                wins += 1
                assert row.activated
                assert row.residual_norm <= (1 - cfg.eps) * row.nominal_residual_norm
                assert row.alpha <= cfg.alpha_max
        assert wins > 0

    def test_first_iteration_activates(self):
        prob = tiny_lasso(n=15, seed=16)
        cfg = solvers.SolverConfig(max_iters=3)
        _, trace = solvers.run_rpdhg(prob, cfg)
        assert trace.rows[0].activated

    def test_converges_to_reference(self):
        prob = tiny_lasso(n=20, seed=17)
        xref, tref = solvers.run_pdhg(prob, solvers.SolverConfig(max_iters=20000))
        ref = tref.rows[-1].best_objective
        x, t = solvers.run_rpdhg(prob, solvers.SolverConfig(max_iters=1000))
        assert abs(t.rows[-1].best_objective - ref) <= 1e-6 * abs(ref)

    def test_deterministic(self):
        prob = tiny_lasso(n=15, seed=18)
        _, t1 = solvers.run_rpdhg(prob, solvers.SolverConfig(max_iters=25))
        _, t2 = solvers.run_rpdhg(prob, solvers.SolverConfig(max_iters=25))
        assert [r.residual_norm for r in t1.rows] == [r.residual_norm for r in t2.rows]
        assert [r.alpha for r in t1.rows] == [r.alpha for r in t2.rows]

    def test_requires_split(self):
        prob = tiny_lasso(n=6, with_split=False)
        with pytest.raises(ParameterError):
            solvers.run_rpdhg(prob, solvers.SolverConfig(max_iters=3))


class TestActivation:
    def mk_row(self, k, residual, alpha, activated):
        return solvers.TraceRow(
            iter=k, objective=0.0, best_objective=0.0, residual_norm=residual,
            tau=1.0, alpha=alpha, inner_backtracks=0, outer_trials=0,
            activated=activated, elapsed_ms=0.0, nominal_residual_norm=residual)

    def test_first_iteration(self):
        cfg = solvers.SolverConfig()
        assert solvers.activation_check([], cfg) is True

    def test_previous_win_triggers(self):
        cfg = solvers.SolverConfig()
        rows = [self.mk_row(1, 1.0, 4.0, True)]
        assert solvers.activation_check(rows, cfg) is True

    def test_previous_fallback_does_not_trigger(self):
        cfg = solvers.SolverConfig()
        rows = [self.mk_row(1, 1.0, cfg.alpha_bar, True)]
        assert solvers.activation_check(rows, cfg) is False

    def test_fast_residual_decay_triggers(self):
        cfg = solvers.SolverConfig()
        rows = [self.mk_row(1, 1.0, cfg.alpha_bar, True),
                self.mk_row(2, 0.9, cfg.alpha_bar, False)]
        assert solvers.activation_check(rows, cfg) is True

    def test_slow_decay_does_not_trigger(self):
        cfg = solvers.SolverConfig()
        rows = [self.mk_row(1, 1.0, cfg.alpha_bar, True),
                self.mk_row(2, 0.96, cfg.alpha_bar, False)]
        assert solvers.activation_check(rows, cfg) is False

    def test_zero_previous_residual_safe(self):
        cfg = solvers.SolverConfig()
        rows = [self.mk_row(1, 0.0, cfg.alpha_bar, True),
                self.mk_row(2, 0.0, cfg.alpha_bar, False)]
        assert solvers.activation_check(rows, cfg) is False


class TestObjectiveEval:
    def test_indicator_projected_first(self):
        # f is a ball indicator: evaluation must project before scoring
        b = np.array([1.0, 0.0])
        a = linops.from_matrix(np.eye(2))
        prob = solvers.SaddleProblem(f=prox.project_ball(b, 0.5),
                                     g=prox.prox_l1(1.0), a=a)
        far = np.array([5.0, 0.0])
        val = solvers.objective_eval_feasible(prob, far)
        assert np.isfinite(val)
        assert abs(val - 1.5) < 1e-12  # projection lands at (1.5, 0)

    def test_plain_when_not_indicator(self):
        prob = tiny_lasso(n=5, with_split=False, seed=19)
        x = rng.standard_normal(5)
        want = prob.f.value(x) + prob.g.value(prob.a.apply(x))
        assert abs(solvers.objective_eval_feasible(prob, x) - want) < 1e-12
