import numpy as np
import pytest

from infodrift import (
    ConstantMix,
    IncrementSign,
    LogOptimalG,
    MarketCoefficients,
    PathBundle,
    RngSpec,
    build_grid,
    decompose,
    deflator,
    realize_chain,
    sample_paths,
    simulate_assets,
    simulate_wealth,
)
from infodrift.valuation import Rebalanced, simulate_terminals

from conftest import assert_within_se


class TestCoefficients:
    def test_equal_volatilities_rejected(self):
        with pytest.raises(ValueError, match="differ"):
            MarketCoefficients(r0=0.1, r1=0.1, eta0=0.1, eta1=0.1, xi0=0.2, xi1=0.2)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            MarketCoefficients(r0=-0.1, r1=0.1, eta0=0.1, eta1=0.1, xi0=0.2, xi1=0.3)

    def test_risk_premia(self, coeffs):
        assert coeffs.M0 == pytest.approx(0.2)
        assert coeffs.M1 == pytest.approx(0.3)


def _frozen_bundle(grid, w, rng=RngSpec(0)):
    return PathBundle(w=np.asarray(w, dtype=np.float64), rng=rng)


class TestSimulateAssets:
    def test_single_regime_gbm_exact(self, coeffs):
        g = build_grid([0.0, 1.0], 64)
        b = sample_paths(g, RngSpec(1), n_paths=32)
        eps = np.ones((32, 1), dtype=np.int8)
        d, s = simulate_assets(coeffs, eps, b, g, s0=2.0)
        w_T = b.w[:, -1]
        expected = 2.0 * np.exp((coeffs.eta1 - 0.5 * coeffs.xi1**2) * 1.0 + coeffs.xi1 * w_T)
        np.testing.assert_allclose(s[:, -1], expected, rtol=1e-12)

    def test_flat_path_bank_account(self, coeffs):
        g = build_grid([0.0, 1.0], 50)
        b = _frozen_bundle(g, np.zeros((1, g.n_fine)))
        eps = np.ones((1, 1), dtype=np.int8)
        d, s = simulate_assets(coeffs, eps, b, g)
        np.testing.assert_allclose(d[0, -1], np.exp(0.01), rtol=1e-12)
        np.testing.assert_allclose(s[0, -1], np.exp(coeffs.eta1 - 0.5 * coeffs.xi1**2), rtol=1e-12)

    def test_positivity(self, coeffs, two_grid):
        b = sample_paths(two_grid, RngSpec(2), n_paths=200)
        eps = realize_chain(IncrementSign(), b, two_grid)
        d, s = simulate_assets(coeffs, eps, b, two_grid)
        assert np.all(d > 0) and np.all(s > 0)


class TestSimulateWealth:
    def test_all_cash_equals_bank(self, coeffs, two_grid):
        b = sample_paths(two_grid, RngSpec(3), n_paths=64)
        eps = realize_chain(IncrementSign(), b, two_grid)
        d, _ = simulate_assets(coeffs, eps, b, two_grid)
        wp = simulate_wealth(ConstantMix(0.0), coeffs, eps, b, two_grid, x0=1.5)
        np.testing.assert_allclose(wp.x, 1.5 * d, rtol=1e-12)

    def test_all_stock_tracks_asset(self, coeffs, two_grid):
        b = sample_paths(two_grid, RngSpec(4), n_paths=64)
        eps = realize_chain(IncrementSign(), b, two_grid)
        _, s = simulate_assets(coeffs, eps, b, two_grid, s0=3.0)
        wp = simulate_wealth(ConstantMix(1.0), coeffs, eps, b, two_grid, x0=2.0)
        np.testing.assert_allclose(wp.x, 2.0 * s / 3.0, rtol=1e-12)

    def test_constant_mix_closed_form_mean(self, coeffs):
        # frozen regime e=1, pi = 1/2: E[ln X_T] has the usual Merton form
        g = build_grid([0.0, 1.0], 100)
        n = 100_000
        b = sample_paths(g, RngSpec(5), n_paths=n)
        eps = np.ones((n, 1), dtype=np.int8)
        wp = simulate_wealth(ConstantMix(0.5), coeffs, eps, b, g, x0=1.0)
        target = (
            coeffs.r1
            + 0.5 * (coeffs.eta1 - coeffs.r1)
            - 0.125 * coeffs.xi1**2
        )
        vals = wp.terminal_log_utility
        assert_within_se(vals.mean(), target, vals.std(ddof=1) / np.sqrt(n), msg="const mix mean")

    def test_wealth_positive(self, coeffs, two_grid):
        b = sample_paths(two_grid, RngSpec(6), n_paths=500)
        eps = realize_chain(IncrementSign(), b, two_grid)
        wp = simulate_wealth(ConstantMix(2.0), coeffs, eps, b, two_grid, x0=1.0)
        assert np.all(wp.x > 0)

    def test_non_finite_strategy_rejected(self, coeffs, two_grid):
        class Bad:
            name = "bad"

            def pi_path(self, coeffs, eps_step, alpha_step):
                return np.full_like(np.asarray(eps_step, dtype=float), np.nan)

        b = sample_paths(two_grid, RngSpec(7), n_paths=2)
        eps = realize_chain(IncrementSign(), b, two_grid)
        with pytest.raises(ValueError, match="non-finite"):
            simulate_wealth(Bad(), coeffs, eps, b, two_grid, x0=1.0)

    def test_forward_increment_identity(self, coeffs, two_grid):
        # int pi xi dW = int pi xi dW^ + int pi xi alpha dt on every path
        spec = IncrementSign()
        b = sample_paths(two_grid, RngSpec(8), n_paths=100)
        b.eps = realize_chain(spec, b, two_grid)
        decompose(spec, b, two_grid)
        pi = 0.7
        xi = coeffs.xi_of(np.repeat(b.eps, two_grid.substeps, axis=1))
        dt = two_grid.fine_dt
        dw = np.diff(b.w, axis=1)
        dwh = np.diff(b.w_hat, axis=1)
        lhs = (pi * xi * dw).sum(axis=1)
        rhs = (pi * xi * dwh).sum(axis=1) + (pi * xi * b.alpha[:, :-1] * dt).sum(axis=1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


class TestDeflator:
    def test_zero_theta_is_identity(self, coeffs, two_grid):
        spec = IncrementSign()
        b = sample_paths(two_grid, RngSpec(9), n_paths=16)
        b.eps = realize_chain(spec, b, two_grid)
        decompose(spec, b, two_grid)
        theta = np.zeros((16, two_grid.n_fine - 1))
        dp = deflator(theta, b, two_grid, coeffs, eps=b.eps)
        np.testing.assert_array_equal(dp.z, np.ones_like(dp.z))

    def test_frozen_regime_true_martingale_moments(self, coeffs):
        # alpha = 0, theta = M1 = 0.3: E[Z_T] = 1 and E[Z_T^2] = exp(theta^2 T)
        g = build_grid([0.0, 1.0], 100)
        n = 200_000
        b = sample_paths(g, RngSpec(10), n_paths=n)
        b.eps = np.ones((n, 1), dtype=np.int8)
        b.alpha = np.zeros((n, g.n_fine))
        b.w_hat = b.w.copy()
        theta = np.full((n, g.n_fine - 1), coeffs.M1)
        dp = deflator(theta, b, g, coeffs, eps=b.eps)
        z = dp.z[:, -1]
        assert_within_se(z.mean(), 1.0, z.std(ddof=1) / np.sqrt(n), msg="E[Z]")
        z2 = z * z
        assert_within_se(
            z2.mean(), np.exp(0.09), z2.std(ddof=1) / np.sqrt(n), msg="E[Z^2]"
        )
        assert np.all(dp.z > 0) and np.all(dp.d > 0)

    def test_strict_local_martingale_level(self):
        # zero risk premium: E[Z_T] collapses to prod_k sum_e P(eps_k = e)^2,
        # not 1 -- the deflator of an informed market loses mass.  The discrete
        # compensator misses part of the drift energy (O(1/sqrt(m))), so the
        # level is read off by two-level extrapolation in m.
        c = MarketCoefficients(r0=0.01, r1=0.01, eta0=0.01, eta1=0.01, xi0=0.2, xi1=0.3)
        n = 100_000
        means, errs = [], []
        for m in (200, 800):
            g = build_grid([0.0, 1.0, 2.0], m)
            s = simulate_terminals(IncrementSign(), c, g, [], n, RngSpec(404))
            z = np.exp(s.ln_z)
            means.append(z.mean())
            errs.append(z.std(ddof=1) / np.sqrt(n))
        extrapolated = 2 * means[1] - means[0]
        se = np.sqrt(4 * errs[1] ** 2 + errs[0] ** 2)
        assert means[1] < means[0] < 0.35, "mass loss should grow with resolution"
        assert_within_se(extrapolated, 0.25, se, msg="E[Z] = prod sum P^2")

    def test_log_optimal_budget_identity_pathwise(self, coeffs, two_grid):
        s = simulate_terminals(
            IncrementSign(), coeffs, two_grid, [LogOptimalG()], 2000, RngSpec(11), x0=1.3
        )
        dzx = s.ln_z - s.ln_d + s.ln_x["log_optimal_g"]
        np.testing.assert_allclose(np.exp(dzx), 1.3, rtol=1e-12)

    def test_deflated_wealth_supermartingale(self, coeffs, two_grid):
        strategies = [ConstantMix(p) for p in (-0.5, 0.5, 1.5)]
        s = simulate_terminals(IncrementSign(), coeffs, two_grid, strategies, 50_000, RngSpec(12))
        dz = s.ln_z - s.ln_d
        for name, lnx in s.ln_x.items():
            v = np.exp(dz + lnx)
            se = v.std(ddof=1) / np.sqrt(len(v))
            assert v.mean() <= 1.0 + 3 * se, f"{name} violates the supermartingale bound"


class TestSchemeConvergence:
    def test_discretization_follows_root_m_law(self, coeffs):
        # The left-endpoint scheme loses drift energy like c/sqrt(m): refining
        # the trading grid by 2 must shrink the loss by 1/sqrt(2).  (The raw
        # loss sits far above MC noise at any practical m, so convergence is
        # verified through the law, not through "delta below one s.e.".)
        g = build_grid([0.0, 1.0], 1600)
        n = 100_000
        s = simulate_terminals(
            IncrementSign(),
            coeffs,
            g,
            [
                Rebalanced(LogOptimalG(), 1),
                Rebalanced(LogOptimalG(), 2),
                Rebalanced(LogOptimalG(), 4),
            ],
            n,
            RngSpec(13),
        )
        d_fine = (s.ln_x["log_optimal_g_hold1"] - s.ln_x["log_optimal_g_hold2"]).mean()
        d_coarse = (s.ln_x["log_optimal_g_hold2"] - s.ln_x["log_optimal_g_hold4"]).mean()
        assert 0.0 < d_fine < d_coarse, "refinement must recover drift energy monotonically"
        np.testing.assert_allclose(d_fine / d_coarse, 1.0 / np.sqrt(2.0), atol=0.12)

    def test_extrapolated_value_stable_across_resolutions(self, coeffs):
        # the production estimator (two-level extrapolation in the trading
        # grid) is unchanged, within noise, when both levels are refined
        n = 50_000
        estimates = []
        errs = []
        for m in (800, 1600):
            g = build_grid([0.0, 1.0], m)
            s = simulate_terminals(
                IncrementSign(),
                coeffs,
                g,
                [LogOptimalG(), Rebalanced(LogOptimalG(), 4)],
                n,
                RngSpec(13_000 + m),
            )
            combo = 2 * s.ln_x["log_optimal_g"] - s.ln_x["log_optimal_g_hold4"]
            estimates.append(combo.mean())
            errs.append(combo.std(ddof=1) / np.sqrt(n))
        se = float(np.hypot(*errs))
        assert abs(estimates[1] - estimates[0]) <= 3 * se, (
            f"extrapolated values {estimates} differ beyond noise {se:.5f}"
        )
