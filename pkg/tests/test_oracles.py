import ast
import inspect
import math

import numpy as np
import pytest
from scipy.special import ndtr

from infodrift import (
    ConditionalState,
    DrawdownBarrier,
    IncrementSign,
    JointIncrementSign,
    Noisy,
    PathwiseBarrier,
    RngSpec,
    build_grid,
)
from infodrift import oracles
from infodrift.oracles import (
    ExactDriverPanel,
    bridge_max_given_endpoint,
    drawdown_law_sampler,
    gaussian_phi_moment,
    gaussian_phi_moment_quadrature,
    nested_mc_conditional,
    oracle_rng,
    regression_alpha,
)

from conftest import assert_within_se


class TestGaussianPhiMoment:
    def test_sigma_zero(self):
        np.testing.assert_allclose(gaussian_phi_moment(0.0), 0.3989423, atol=1e-7)

    def test_sigma_one(self):
        np.testing.assert_allclose(gaussian_phi_moment(1.0), 0.2820948, atol=1e-7)

    def test_large_sigma_vanishes(self):
        assert gaussian_phi_moment(1e6) < 1e-6

    def test_quadrature_cross_check(self):
        for sigma in (0.0, 0.3, 1.0, 2.7):
            assert abs(gaussian_phi_moment(sigma) - gaussian_phi_moment_quadrature(sigma)) < 1e-10


class TestBridgeMax:
    def test_max_at_least_endpoints(self):
        gen = np.random.default_rng(0)
        v = gen.normal(size=2000)
        r = bridge_max_given_endpoint(v, 1.0, gen.random(2000))
        assert np.all(r >= np.maximum(v, 0.0) - 1e-12)

    def test_unconditional_law_is_half_normal(self):
        # max over [0, t] of BM: P(max > y) = 2 Phibar(y / sqrt(t))
        gen = np.random.default_rng(1)
        t = 0.7
        n = 400_000
        v = math.sqrt(t) * gen.standard_normal(n)
        r = bridge_max_given_endpoint(v, t, gen.random(n))
        for y in (0.3, 0.8, 1.5):
            p_hat = float(np.mean(r > y))
            target = 2 * ndtr(-y / math.sqrt(t))
            assert_within_se(p_hat, target, math.sqrt(p_hat * (1 - p_hat) / n), msg=f"y={y}")


class TestNestedMcConditional:
    def test_increment_sign_example(self, unit_grid):
        st = ConditionalState(k=0, t=0.25, w_t=0.3, w_tk=0.0)
        est, se = nested_mc_conditional(IncrementSign(), st, 1, 100_000, RngSpec(5), grid=unit_grid)
        target = float(ndtr(0.3 / math.sqrt(0.75)))
        assert_within_se(est, target, se, msg="increment sign")

    def test_drawdown_state_grid(self, unit_grid):
        spec = DrawdownBarrier(c=0.9)
        for kappa in (0.0, 0.4, 1.1):
            for t in (0.2, 0.6):
                st = ConditionalState(
                    k=0, t=t, w_t=0.0, w_tk=0.0, run_max_from_0=kappa
                )
                est, se = nested_mc_conditional(spec, st, 50_000, RngSpec(6), grid=unit_grid)
                drem = 1.0 - t
                target = float(
                    ndtr(-(spec.c - kappa) / math.sqrt(drem))
                    + ndtr(-(spec.c + kappa) / math.sqrt(drem))
                )
                assert_within_se(est, target, se, msg=f"kappa={kappa} t={t}")

    def test_pathwise_absorbed_exactly_zero(self, unit_grid):
        spec = PathwiseBarrier(b_offset=0.5)
        st = ConditionalState(k=0, t=0.4, w_t=0.1, w_tk=0.0, run_max_from_tk=0.9)
        est, se = nested_mc_conditional(spec, st, 1, 10_000, RngSpec(7), grid=unit_grid)
        assert est == 0.0 and se == 0.0

    def test_noisy_thins_base(self, unit_grid):
        base = IncrementSign()
        spec = Noisy(base=base, p=(0.5,))
        st = ConditionalState(k=0, t=0.0, w_t=0.0, w_tk=0.0)
        est, se = nested_mc_conditional(spec, st, 1, 100_000, RngSpec(8), grid=unit_grid)
        assert_within_se(est, 0.25, se, msg="noisy thinning")

    def test_inner_sample_floor(self, unit_grid):
        st = ConditionalState(k=0, t=0.0, w_t=0.0, w_tk=0.0)
        with pytest.raises(ValueError, match="inner sample"):
            nested_mc_conditional(IncrementSign(), st, 1, 100, RngSpec(9), grid=unit_grid)


class TestRegressionAlpha:
    def test_increment_sign_symmetric_state(self, unit_grid):
        st = ConditionalState(k=0, t=0.0, w_t=0.0, w_tk=0.0)
        ((est, se, flagged),) = regression_alpha(
            IncrementSign(), 1, [st], fine_dt=4e-4, n_paths=400_000, rng=RngSpec(10), grid=unit_grid
        )
        assert not flagged
        assert_within_se(est, 0.7978846, se, msg="symmetric increment-sign drift")

    def test_pathwise_absorbed_slope_zero(self, unit_grid):
        # after absorption the conditional probability of 0 is identically 1
        spec = PathwiseBarrier(b_offset=0.5)
        st = ConditionalState(k=0, t=0.4, w_t=0.0, w_tk=0.0, run_max_from_tk=1.5)
        ((est, se, flagged),) = regression_alpha(
            spec, 0, [st], fine_dt=4e-4, n_paths=40_000, rng=RngSpec(11), grid=unit_grid
        )
        assert not flagged
        assert est == 0.0

    def test_drawdown_cancellation_at_zero_drawdown(self, unit_grid):
        spec = DrawdownBarrier(c=1.0)
        st = ConditionalState(k=0, t=0.3, w_t=0.4, w_tk=0.0, run_max_from_0=0.4)
        ((est, se, flagged),) = regression_alpha(
            spec, 1, [st], fine_dt=1e-4, n_paths=400_000, rng=RngSpec(12), grid=unit_grid
        )
        assert not flagged
        assert_within_se(est, 0.0, se, msg="drawdown drift at K=0")

    def test_degenerate_state_flagged(self, unit_grid):
        # barrier so tight that the bumped-up probability hits zero
        spec = PathwiseBarrier(b_offset=0.05)
        st = ConditionalState(k=0, t=0.95, w_t=0.049, w_tk=0.0, run_max_from_tk=0.049)
        ((est, se, flagged),) = regression_alpha(
            spec, 1, [st], fine_dt=1e-6, n_paths=20_000, rng=RngSpec(13), grid=unit_grid
        )
        assert flagged and math.isnan(est)

    def test_probe_step_validated(self, unit_grid):
        st = ConditionalState(k=0, t=0.99, w_t=0.0, w_tk=0.0)
        with pytest.raises(ValueError, match="probe step"):
            regression_alpha(
                IncrementSign(), 1, [st], fine_dt=0.5, n_paths=20_000, rng=RngSpec(14), grid=unit_grid
            )


class TestDrawdownLawSampler:
    def test_never_below_zero(self):
        s = drawdown_law_sampler(1.0, RngSpec(15), 1000)
        assert np.all(s >= 0)
        assert float(np.mean(s > 0.0)) == 1.0

    def test_survival_at_one(self):
        s = drawdown_law_sampler(1.0, RngSpec(16), 300_000)
        p_hat = float(np.mean(s > 1.0))
        assert_within_se(p_hat, 0.3173105, math.sqrt(p_hat * (1 - p_hat) / len(s)), msg="2 Phibar(1)")

    def test_median_is_three_quarter_quantile_of_normal(self):
        s = drawdown_law_sampler(1.0, RngSpec(17), 300_000)
        med = float(np.median(s))
        # se of a sample median: 1/(2 f(q) sqrt(n))
        dens = 2 * np.exp(-0.5 * 0.6744898**2) / np.sqrt(2 * np.pi)
        se = 1.0 / (2 * dens * math.sqrt(len(s)))
        assert_within_se(med, 0.6744898, se, msg="half-normal median")


class TestExactPanel:
    def test_panel_interpolates_grid_and_evals(self, two_grid):
        panel = ExactDriverPanel(two_grid, [0.5, 1.25], RngSpec(18), 500)
        assert panel.index_of(1.0) > 0
        st = panel.state(DrawdownBarrier(c=1.0), 1.25)
        assert st.k == 1
        assert np.all(np.asarray(st.run_max_from_0) >= np.asarray(st.w_t) - 1e-12)

    def test_realize_matches_unconditional_law(self, two_grid):
        panel = ExactDriverPanel(two_grid, [0.5], RngSpec(19), 200_000)
        for spec, target in (
            (IncrementSign(), 0.5),
            (DrawdownBarrier(c=1.0), 2 * ndtr(-1.0)),
            (PathwiseBarrier(b_offset=1.0), 1 - 2 * ndtr(-1.0)),
        ):
            eps = panel.realize(spec)
            p_hat = float(eps[:, 0].mean())
            se = math.sqrt(p_hat * (1 - p_hat) / eps.shape[0])
            assert_within_se(p_hat, target, se, msg=type(spec).__name__)

    def test_two_driver_panel(self, two_grid):
        panel = ExactDriverPanel(two_grid, [0.5], RngSpec(20), 100_000, with_second=True)
        eps = panel.realize(JointIncrementSign())
        p_hat = float(eps[:, 0].mean())
        assert_within_se(p_hat, 0.25, math.sqrt(p_hat * (1 - p_hat) / eps.shape[0]), msg="joint")


class TestOracleIndependence:
    def test_no_closed_form_calls(self):
        # the oracle module must not evaluate production probability or drift
        # formulas; it may import the spec dataclasses for dispatch only
        source = inspect.getsource(oracles)
        tree = ast.parse(source)
        banned = {
            "conditional_prob",
            "unconditional_prob",
            "jacod_density",
            "cond_prob_one_and_numerator",
            "second_driver_numerator",
            "alpha",
            "gamma",
            "alpha_binary_general",
            "decompose",
            "theta",
        }
        used = {
            node.id for node in ast.walk(tree) if isinstance(node, ast.Name)
        } | {node.attr for node in ast.walk(tree) if isinstance(node, ast.Attribute)}
        assert not (banned & used), f"oracle module references production formulas: {banned & used}"

    def test_oracle_seeds_salted(self):
        spec = RngSpec(1234, 7)
        assert oracle_rng(spec).seed != spec.seed
        assert oracle_rng(spec).stream_id == spec.stream_id
