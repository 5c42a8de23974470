import math

import mpmath
import numpy as np
import pytest

from adn import (BlockNormConstant, ProblemSpec, Regularizer, SmoothLoss,
                 TrustConfig, compute_rho, decide_round, load_columns,
                 partition_columns, predict_constants, sigma_sup_bounds,
                 sigma_sup_lipschitz_hessian, sigma_sup_quasi_self_concordant,
                 update_sigma_parameter_free, update_sigma_threshold)
from adn.errors import (ConfigError, DegenerateQuadraticTerm, InvalidInput,
                        MissingConstant)


class TestTrustConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            TrustConfig(gamma=1.0)
        with pytest.raises(ConfigError):
            TrustConfig(zeta=0.9)
        with pytest.raises(ConfigError):
            TrustConfig(xi=0.9, zeta=1.2)  # xi >= 1/zeta
        with pytest.raises(ConfigError):
            TrustConfig(sigma0=1e-12, sigma_min=1e-8)
        with pytest.raises(ConfigError):
            TrustConfig(schedule="bogus")

    def test_xi_zero_allowed(self):
        assert TrustConfig(xi=0.0).xi == 0.0


class TestComputeRho:
    def test_arithmetic(self):
        rho, degenerate = compute_rho(10.0, 9.0, 8.0)
        assert rho == 0.5 and not degenerate

    def test_exact_model_ratio_one(self):
        rho, _ = compute_rho(5.0, 3.0, 3.0)
        assert rho == 1.0

    def test_zero_update_degenerate(self):
        rho, degenerate = compute_rho(7.0, 7.0, 7.0)
        assert degenerate and math.isnan(rho)


class TestThresholdSchedule:
    def test_good_fit(self):
        cfg = TrustConfig(gamma=1.2, zeta=1.2)
        assert update_sigma_threshold(1.0, 1.0, cfg) == 1.0

    def test_too_conservative(self):
        cfg = TrustConfig(gamma=1.2, zeta=1.2)
        assert update_sigma_threshold(1.0, 2.0, cfg) == pytest.approx(1 / 1.2)

    def test_too_aggressive(self):
        cfg = TrustConfig(gamma=1.2, zeta=1.2)
        assert update_sigma_threshold(1.0, 0.1, cfg) == pytest.approx(1.2)

    def test_degenerate_increases(self):
        cfg = TrustConfig(gamma=1.5)
        assert update_sigma_threshold(2.0, math.nan, cfg) == 3.0

    def test_clamping(self):
        cfg = TrustConfig(sigma0=1.0, sigma_min=0.9, sigma_max=1.1, gamma=2.0)
        assert update_sigma_threshold(1.0, 100.0, cfg) == 0.9
        assert update_sigma_threshold(1.0, -5.0, cfg) == 1.1

    def test_branch_ratios(self):
        cfg = TrustConfig(gamma=1.3, zeta=1.4)
        for rho in np.linspace(-2, 4, 61):
            ratio = update_sigma_threshold(1.0, float(rho), cfg)
            assert ratio in (1 / 1.3, 1.0, 1.3)
            if rho > 1.4:
                assert ratio == 1 / 1.3
            elif rho >= 1 / 1.4:
                assert ratio == 1.0
            else:
                assert ratio == 1.3


class TestParameterFreeSchedule:
    def test_exact_curvature_fixed_point(self):
        # quadratic f: the measured and modeled curvature coincide
        assert update_sigma_parameter_free(1.0, f_new=3.0, f_old=1.0, lin=0.5,
                                           quad_model=3.0) == 1.0

    def test_arithmetic(self):
        got = update_sigma_parameter_free(2.0, f_new=3.0, f_old=0.0, lin=0.0,
                                          quad_model=1.0)
        assert got == 6.0

    def test_degenerate_quadratic_term(self):
        with pytest.raises(DegenerateQuadraticTerm):
            update_sigma_parameter_free(1.0, 1.0, 1.0, 0.0, 1.0)

    def test_clamped(self):
        cfg = TrustConfig(sigma0=1.0, sigma_min=1e-2, sigma_max=4.0)
        got = update_sigma_parameter_free(2.0, 3.0, 0.0, 0.0, 1.0, cfg=cfg)
        assert got == 4.0

    def test_cross_checked_on_toy_logistic(self, rng):
        # evaluate all four terms independently on a tiny instance
        from adn import (SolverBudget, build_subproblems, f_eval, f_grad,
                         solve_local)
        import oracles

        reg = Regularizer.l2(0.3)
        matrix, problem = oracles.random_instance(rng, 4, 4, "logistic", reg)
        partition = partition_columns(4, 2, "contiguous")
        alpha = 0.2 * rng.standard_normal(4)
        v = matrix.matvec(alpha)
        sigma = 1.4
        subs = build_subproblems(problem, matrix, partition, alpha, v, sigma)
        delta = np.zeros(4)
        for sub in subs:
            delta[sub.members] = solve_local(sub, SolverBudget(50, seed=0)).delta
        dense = matrix.to_dense()
        f_old = f_eval(problem.loss, v)
        f_new = f_eval(problem.loss, v + dense @ delta)
        lin = float(f_grad(problem.loss, v) @ (dense @ delta))
        diag = oracles.fd_free_hess_diag(problem.loss, v)
        h = oracles.assemble_block_hessian(dense, partition, diag)
        quad_model = f_old + lin + 0.5 * sigma * float(delta @ h @ delta)
        got = update_sigma_parameter_free(sigma, f_new, f_old, lin, quad_model)
        expected = sigma * (f_new - f_old - lin) / (quad_model - f_old - lin)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got > 0


class TestDecideRound:
    def test_acceptance_rule(self):
        cfg = TrustConfig(xi=0.25)
        # accepted (rho >= xi) even though sigma still increases
        d = decide_round(10.0, 9.0, 8.0, 1.0, cfg)
        assert d.accepted and d.rho == 0.5 and d.reason == "too_aggressive"
        d = decide_round(10.0, 8.1, 8.0, 1.0, cfg)
        assert d.accepted and d.reason == "good_fit"
        d = decide_round(10.0, 9.9, 8.0, 1.0, cfg)
        assert not d.accepted and d.reason == "too_aggressive"

    def test_degenerate_rejected_and_increased(self):
        cfg = TrustConfig(gamma=1.2)
        d = decide_round(10.0, 10.0, 10.0, 1.0, cfg)
        assert not d.accepted
        assert d.reason == "degenerate_denominator"
        assert d.sigma_next == pytest.approx(1.2)

    def test_fixed_schedule(self):
        cfg = TrustConfig(schedule="fixed", sigma_fixed=3.0, sigma0=3.0)
        d = decide_round(10.0, 9.0, 8.0, 3.0, cfg)
        assert d.sigma_next == 3.0

    def test_acceptance_invariant_random(self, rng):
        # accepted <=> rho >= xi and the denominator was not degenerate
        cfg = TrustConfig(xi=0.1, gamma=1.3, zeta=1.5)
        for _ in range(500):
            obj_old = float(rng.standard_normal())
            obj_new = obj_old - float(rng.standard_normal()) * 0.5
            model_new = obj_old - float(rng.standard_normal()) * 0.5
            d = decide_round(obj_old, obj_new, model_new, 1.0, cfg)
            degenerate = d.reason == "degenerate_denominator"
            assert d.accepted == ((not degenerate) and d.rho >= cfg.xi)
            assert cfg.sigma_min <= d.sigma_next <= cfg.sigma_max


class TestPredictConstants:
    def make_problem(self, mu=1.0):
        m = load_columns([(0, 0, 1.0), (1, 1, 1.0)], 2, 2)
        spec = ProblemSpec(SmoothLoss.least_squares(np.zeros(2)),
                           Regularizer.l2(mu))
        part = partition_columns(2, 2, "contiguous")
        return spec, m, part

    def test_c2_plug_in(self):
        spec, m, part = self.make_problem(mu=1.0)
        cfg = TrustConfig(xi=0.1)
        norms = BlockNormConstant(1.0, 1.0, np.ones(2), np.ones(2))
        consts = predict_constants(spec, m, part, cfg, eta=0.0, sigma_sup=1.0,
                                   eps0=1.0, block_norms=norms)
        assert consts.c2 == pytest.approx(0.95, rel=1e-12)

    def test_c2_tends_to_one_as_xi_vanishes(self):
        spec, m, part = self.make_problem()
        norms = BlockNormConstant(1.0, 1.0, np.ones(2), np.ones(2))
        prev_gap = None
        for xi in (1e-2, 1e-4, 1e-6, 1e-8):
            consts = predict_constants(spec, m, part, TrustConfig(xi=xi), 0.0,
                                       1.0, 1.0, block_norms=norms)
            gap = 1.0 - consts.c2
            assert gap > 0
            if prev_gap is not None:
                assert gap < prev_gap
            prev_gap = gap
        assert consts.c2 == pytest.approx(1.0, abs=1e-7)

    def test_c1_formula(self):
        m = load_columns([(0, 0, 1.0), (1, 1, 1.0)], 2, 2)
        spec = ProblemSpec(SmoothLoss.least_squares(np.zeros(2)),
                           Regularizer.l1(1.0, 2.0))
        part = partition_columns(2, 1, "contiguous")
        cfg = TrustConfig(xi=0.5)
        consts = predict_constants(spec, m, part, cfg, eta=0.5, sigma_sup=2.0,
                                   eps0=3.0)
        # 2 (4 L^2 R^2 + tau eps0) / (tau xi (1 - eta)) with L=2, R=1, tau=1
        assert consts.c1 == pytest.approx(2 * (16 + 3) / (1 * 0.5 * 0.5))
        # success coefficient uses sigma_sup: 2(4 L^2 R^2 sigma_sup + eps0)/(xi(1-eta))
        assert consts.sublinear_success_coeff == pytest.approx(
            2 * (16 * 2.0 + 3) / 0.25)
        assert consts.c2 is None
        with pytest.raises(MissingConstant):
            consts.successful_rounds_strongly_convex(0.1)

    def test_missing_support_bound(self):
        spec, m, part = self.make_problem()
        consts = predict_constants(spec, m, part, TrustConfig(xi=0.1), 0.0,
                                   1.0, 1.0)
        assert consts.c1 is None
        with pytest.raises(MissingConstant):
            consts.successful_rounds_bounded_support(0.1)

    def test_unsuccessful_bound(self):
        spec, m, part = self.make_problem()
        cfg = TrustConfig(xi=0.1, gamma=1.2, sigma0=1.0)
        consts = predict_constants(spec, m, part, cfg, 0.0, 10.0, 1.0)
        expected = math.log(10.0) / math.log(1.2)
        assert consts.unsuccessful_extra == pytest.approx(expected)
        assert consts.unsuccessful_rounds_bound(5) == pytest.approx(expected + 5)

    def test_requires_positive_xi(self):
        spec, m, part = self.make_problem()
        with pytest.raises(InvalidInput):
            predict_constants(spec, m, part, TrustConfig(xi=0.0), 0.0, 1.0, 1.0)


class TestSigmaSupBounds:
    def test_small_argument_limit(self):
        # bracket -> ||delta|| / 2, so the bound tends to K gamma ||delta||
        for step_norm in (0.5, 1.0, 2.0):
            got = sigma_sup_quasi_self_concordant(1e-9, step_norm, 4, 1.2)
            assert got == pytest.approx(4 * 1.2 * step_norm, rel=1e-8)

    def test_plug_in_value(self):
        got = sigma_sup_quasi_self_concordant(1.0, 1.0, 2, 1.2)
        expected = 4.8 * (math.e - 2.0)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(3.4477, abs=1e-4)

    def test_lipschitz_plug_in(self):
        assert sigma_sup_lipschitz_hessian(1.0, 1.0, 1.0, 1.2) == pytest.approx(1.8)

    def test_invalid_inputs(self):
        with pytest.raises(InvalidInput):
            sigma_sup_quasi_self_concordant(0.0, 1.0, 1, 1.2)
        with pytest.raises(InvalidInput):
            sigma_sup_lipschitz_hessian(1.0, -1.0, 1.0, 1.2)
        with pytest.raises(InvalidInput):
            sigma_sup_bounds("nope")

    def test_dispatch(self):
        a = sigma_sup_bounds("quasi_self_concordant", m_f=1.0, step_norm=1.0,
                             k_parts=2, gamma=1.2)
        assert a == pytest.approx(sigma_sup_quasi_self_concordant(1.0, 1.0, 2, 1.2))
        b = sigma_sup_bounds("lipschitz_hessian", lipschitz=1.0,
                             direction_agreement=1.0, h_norm=1.0, gamma=1.2)
        assert b == pytest.approx(1.8)

    def test_extended_precision_agreement(self, rng):
        mpmath.mp.dps = 60
        for _ in range(100):
            m_f = float(10.0 ** rng.uniform(-8, 1))
            step = float(10.0 ** rng.uniform(-4, 1))
            k = int(rng.integers(1, 33))
            gamma = float(rng.uniform(1.01, 2.0))
            got = sigma_sup_quasi_self_concordant(m_f, step, k, gamma)
            x = mpmath.mpf(m_f) * mpmath.mpf(step)
            expected = (2 * k * mpmath.mpf(gamma)
                        * (mpmath.e**x - x - 1) / (mpmath.mpf(m_f) ** 2 * mpmath.mpf(step)))
            assert abs(got - float(expected)) <= 1e-12 * float(expected)
