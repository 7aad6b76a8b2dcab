import math

import numpy as np
import pytest

import obo
from obo.core import CallbackOracle, required_q_increment
from obo.errors import ArgumentError, DimensionError, DomainError


def identity_inner_oracle(d1=3, d2=4):
    """f == 0, g = 0.5||y||^2: identity inner Hessian, zero outer gradients."""
    return CallbackOracle(
        d1=d1,
        d2=d2,
        f=lambda x, y: 0.0,
        g=lambda x, y: 0.5 * float(y @ y),
        gfx=lambda x, y: np.zeros(d1),
        gfy=lambda x, y: np.zeros(d2),
        ggy=lambda x, y: y,
        hyy=lambda x, y, v: v,
        cxy=lambda x, y, v: np.zeros(d1),
        y_star_fn=lambda x: np.zeros(d2),
        constants=obo.RegularityConstants(mu_g=1.0, l1=1.0),
    )


class TestCheckOracle:
    def test_quadratic_oracle_passes_tightly(self, quad_stream):
        rng = np.random.default_rng(0)
        oracle = quad_stream[0]
        x = rng.standard_normal(oracle.d1)
        y = rng.standard_normal(oracle.d2)
        report = obo.check_oracle(oracle, x, y, eps=1e-5, mu_g=quad_stream.constants.mu_g, rng=rng)
        assert report.passed
        for name in ("grad_f_x", "grad_f_y", "grad_g_y"):
            assert report.error_of(name) < 1e-6

    def test_quadratic_callbacks_match_hand_formulas(self, quad_stream):
        # Independent derivation: write each derivative out by hand and
        # compare against the oracle's callbacks.
        rng = np.random.default_rng(1)
        o = quad_stream[3]
        x = rng.standard_normal(o.d1)
        y = rng.standard_normal(o.d2)
        v = rng.standard_normal(o.d2)
        np.testing.assert_allclose(o.grad_f_x(x, y), o.ridge * (x - o.x_target), rtol=0, atol=0)
        np.testing.assert_allclose(o.grad_f_y(x, y), y - o.y_target, rtol=0, atol=0)
        np.testing.assert_allclose(o.grad_g_y(x, y), o.A @ y - o.B @ x - o.c, atol=1e-15)
        np.testing.assert_allclose(o.hess_g_yy_vec(x, y, v), o.A @ v, rtol=0, atol=0)
        np.testing.assert_allclose(o.cross_g_xy_vec(x, y, v), -o.B.T @ v, rtol=0, atol=0)

    def test_trivial_identity_oracle(self):
        oracle = identity_inner_oracle()
        rng = np.random.default_rng(2)
        x = rng.standard_normal(3)
        y = rng.standard_normal(4)
        report = obo.check_oracle(oracle, x, y, mu_g=1.0, rng=rng)
        assert report.passed
        np.testing.assert_array_equal(oracle.grad_f_x(x, y), np.zeros(3))
        v = rng.standard_normal(4)
        np.testing.assert_array_equal(oracle.hess_g_yy_vec(x, y, v), v)

    def test_planted_fault_is_detected(self, quad_stream):
        o = quad_stream[0]
        faulty = CallbackOracle(
            d1=o.d1,
            d2=o.d2,
            f=o.f_value,
            g=o.g_value,
            gfx=lambda x, y: 2.0 * o.grad_f_x(x, y),
            gfy=o.grad_f_y,
            ggy=o.grad_g_y,
            hyy=o.hess_g_yy_vec,
            cxy=o.cross_g_xy_vec,
        )
        rng = np.random.default_rng(3)
        x = rng.standard_normal(o.d1)
        y = rng.standard_normal(o.d2)
        report = obo.check_oracle(faulty, x, y, rng=rng)
        assert not report.passed
        assert abs(report.error_of("grad_f_x") - 1.0) < 1e-4

    def test_eps_range_enforced(self, quad_stream):
        o = quad_stream[0]
        with pytest.raises(ArgumentError):
            obo.check_oracle(o, np.zeros(o.d1), np.zeros(o.d2), eps=0.5)

    def test_dimension_mismatch(self, quad_stream):
        o = quad_stream[0]
        with pytest.raises(DimensionError):
            obo.check_oracle(o, np.zeros(o.d1 + 1), np.zeros(o.d2))

    def test_hess_linearity(self, quad_stream, hr_stream, ho_stream):
        rng = np.random.default_rng(4)
        for stream in (quad_stream, hr_stream, ho_stream):
            o = stream[0]
            x = 0.5 * rng.standard_normal(o.d1)
            y = 0.5 * rng.standard_normal(o.d2)
            for _ in range(5):
                a, b = rng.standard_normal(2)
                u = rng.standard_normal(o.d2)
                v = rng.standard_normal(o.d2)
                lhs = o.hess_g_yy_vec(x, y, a * u + b * v)
                rhs = a * o.hess_g_yy_vec(x, y, u) + b * o.hess_g_yy_vec(x, y, v)
                scale = max(np.linalg.norm(lhs), 1e-12)
                assert np.linalg.norm(lhs - rhs) / scale < 1e-10

    def test_y_star_consistency(self, quad_stream, hr_stream):
        rng = np.random.default_rng(5)
        for stream in (quad_stream, hr_stream):
            o = stream[0]
            for _ in range(20):
                x = rng.standard_normal(o.d1)
                ystar = o.y_star(x)
                grad = np.linalg.norm(o.grad_g_y(x, ystar))
                assert grad <= 1e-8 * (1 + np.linalg.norm(ystar))


class TestValidateConfig:
    def test_eta_condition_direct_substitution(self):
        constants = obo.RegularityConstants(mu_g=1.0, l1=1.0)
        cfg = obo.OptimizerConfig(alpha=1.0, beta=0.1, eta=0.99, lambda_solver=1.0)
        result = obo.validate_config(cfg, constants)
        eta_item = [i for i in result.items if i.name.startswith("eta")][0]
        assert eta_item.passed  # 1 - 1*1/2 = 0.5 < 0.99

    def test_alpha_bound_fails(self):
        constants = obo.RegularityConstants(mu_g=0.5, l1=1.0)
        cfg = obo.OptimizerConfig(alpha=2.0, beta=0.1, lambda_solver=1.0)
        result = obo.validate_config(cfg, constants)
        alpha_item = [i for i in result.items if i.name.startswith("alpha")][0]
        assert not alpha_item.passed
        assert not result.all_passed

    def test_q_increment_threshold(self):
        # Independent evaluation of the growth condition's logarithm ratio.
        required = math.log(1 - 0.1 * 0.5 / 2) / (2 * math.log(1 - 0.1 * 0.5))
        assert abs(required - 0.2468) < 1e-4
        constants = obo.RegularityConstants(mu_g=0.5, l1=10.0)
        ok = obo.OptimizerConfig(alpha=0.1, beta=0.1, lambda_solver=0.1, q_increment=0.25)
        bad = obo.OptimizerConfig(alpha=0.1, beta=0.1, lambda_solver=0.1, q_increment=0.2)
        item_ok = [i for i in obo.validate_config(ok, constants).items if "q_increment" in i.name][0]
        item_bad = [i for i in obo.validate_config(bad, constants).items if "q_increment" in i.name][0]
        assert item_ok.passed
        assert not item_bad.passed

    def test_required_increment_degenerate_contraction(self):
        assert required_q_increment(alpha=2.0, lambda_solver=1.0, mu_g=1.0) == 0.0

    def test_validation_is_advisory(self):
        constants = obo.RegularityConstants(mu_g=1.0, l1=1.0)
        cfg = obo.OptimizerConfig(alpha=5.0, beta=0.1, lambda_solver=5.0)
        result = obo.validate_config(cfg, constants)  # must not raise
        assert not result.all_passed
        assert "warn" in str(result)


class TestTypes:
    def test_regularity_constants_ordering(self):
        with pytest.raises(ArgumentError):
            obo.RegularityConstants(mu_g=2.0, l1=1.0)
        with pytest.raises(ArgumentError):
            obo.RegularityConstants(mu_g=-1.0, l1=1.0)

    def test_domain_validation(self):
        with pytest.raises(DomainError):
            obo.Domain.ball(np.zeros(2), 0.0)
        with pytest.raises(DomainError):
            obo.Domain.box([1.0, 0.0], [0.0, 1.0])

    def test_optimizer_config_ranges(self):
        with pytest.raises(ArgumentError):
            obo.OptimizerConfig(alpha=0.1, beta=0.1, eta=0.0)
        with pytest.raises(ArgumentError):
            obo.OptimizerConfig(alpha=0.1, beta=0.1, eta=1.5)
        with pytest.raises(ArgumentError):
            obo.OptimizerConfig(alpha=0.1, beta=0.1, k_window=0)
        with pytest.raises(ArgumentError):
            obo.OptimizerConfig(alpha=0.1, beta=0.1, q0=5, q_max=3)
        with pytest.raises(ArgumentError):
            obo.OptimizerConfig(alpha=0.1, beta=0.1, solver_kind="nope")

    def test_vectors_must_be_finite(self):
        from obo.core import as_vector
        from obo.errors import NumericalError

        with pytest.raises(NumericalError):
            as_vector([1.0, np.nan])
        with pytest.raises(DimensionError):
            as_vector(np.zeros((2, 2)))
