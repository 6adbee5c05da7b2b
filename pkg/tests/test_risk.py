"""Monte Carlo risk laboratory tests.

Analytic oracles: for theta=0, sigma=1, no noise the MLE risk is p and the
James-Stein risk is p - (p-2)^2 * E[1/chi2_p] = p - (p-2) = 2. For the Gamma
Stein identity the catalog functions have closed-form moments.
"""

import numpy as np
import pytest

from steinbn.noise import NoiseSpec, truncated_levy_gauss
from steinbn.risk import (
    STEIN_CATALOG,
    VERDICT_DOMINATES,
    GammaTrialSpec,
    RiskReport,
    mc_key_inequality,
    mc_risk_gamma,
    mc_risk_gaussian,
    mc_stein_gamma_lemma,
)
from steinbn.tensor import InvalidInputError

NONE = NoiseSpec(family="none")


class TestGaussianRisk:
    def test_analytic_oracles_at_origin(self):
        report = mc_risk_gaussian(8, np.zeros(8), 1.0, NONE, 50_000, seed=1)
        mle, mle_se = report.estimator_risks["mle"]
        js, js_se = report.estimator_risks["js"]
        assert abs(mle - 8.0) < 3 * mle_se
        assert abs(js - 2.0) < 3 * js_se
        assert report.verdict == VERDICT_DOMINATES

    def test_dominance_under_truncated_noise(self):
        report = mc_risk_gaussian(8, np.zeros(8), 1.0, truncated_levy_gauss(0.1), 50_000, seed=2)
        assert report.verdict == VERDICT_DOMINATES
        assert report.margin_se >= 3.0

    def test_scaling_reduction(self):
        # (theta, sigma) and (theta/sigma, 1) give the same JS/MLE risk ratio
        theta = np.array([1.0, -2.0, 0.5, 1.5])
        r1 = mc_risk_gaussian(4, theta, 2.0, NONE, 100_000, seed=3)
        r2 = mc_risk_gaussian(4, theta / 2.0, 1.0, NONE, 100_000, seed=3)
        ratio1 = r1.estimator_risks["js"][0] / r1.estimator_risks["mle"][0]
        ratio2 = r2.estimator_risks["js"][0] / r2.estimator_risks["mle"][0]
        assert ratio1 == pytest.approx(ratio2, rel=0.02)

    def test_se_shrinks_with_trials(self):
        se_small = mc_risk_gaussian(4, np.zeros(4), 1.0, NONE, 10_000, seed=4).estimator_risks["mle"][1]
        se_large = mc_risk_gaussian(4, np.zeros(4), 1.0, NONE, 100_000, seed=4).estimator_risks["mle"][1]
        assert se_small / se_large == pytest.approx(np.sqrt(10), rel=0.2)

    def test_reproducibility(self):
        a = mc_risk_gaussian(4, np.zeros(4), 1.0, NONE, 20_000, seed=5)
        b = mc_risk_gaussian(4, np.zeros(4), 1.0, NONE, 20_000, seed=5)
        assert a.to_json() == b.to_json()

    def test_invalid_inputs(self):
        with pytest.raises(InvalidInputError):
            mc_risk_gaussian(2, np.zeros(2), 1.0, NONE, 1_000, seed=0)
        with pytest.raises(InvalidInputError):
            mc_risk_gaussian(4, np.zeros(3), 1.0, NONE, 1_000, seed=0)

    def test_report_json_roundtrip(self):
        report = mc_risk_gaussian(4, np.zeros(4), 1.0, NONE, 10_000, seed=6)
        back = RiskReport.from_json(report.to_json())
        assert back.verdict == report.verdict
        assert back.estimator_risks == report.estimator_risks


class TestGammaRisk:
    def make_spec(self, c, noise=NONE, p=3, n=10, sigmas=None):
        sigmas = np.ones(p) if sigmas is None else sigmas
        return GammaTrialSpec(p=p, n=n, mu=0.0, sigmas_x=sigmas, noise=noise, c=c)

    def test_c_zero_exact_equality(self):
        report = mc_risk_gamma(self.make_spec(0.0), 5_000, seed=1)
        naive, _ = report.estimator_risks["naive"]
        js, _ = report.estimator_risks["js"]
        assert js == naive
        assert report.verdict == VERDICT_DOMINATES
        assert report.margin_se == float("inf")

    def test_dominance_at_midpoint_clean(self):
        alpha = (10 - 1) / 2.0
        from steinbn.estimators import classical_c_bound

        c = classical_c_bound(alpha, 3) / 2.0
        report = mc_risk_gamma(self.make_spec(c), 100_000, seed=2)
        assert report.verdict == VERDICT_DOMINATES
        assert report.margin_se >= 3.0

    def test_dominance_under_noise(self):
        alpha = (10 - 1) / 2.0
        from steinbn.estimators import classical_c_bound

        c = classical_c_bound(alpha, 3) / 2.0
        report = mc_risk_gamma(self.make_spec(c, noise=truncated_levy_gauss(0.1)), 100_000, seed=3)
        assert report.verdict == VERDICT_DOMINATES

    def test_heteroscedastic_spec(self):
        from steinbn.estimators import classical_c_bound

        alpha = (10 - 1) / 2.0
        sigmas = np.array([2.0, 0.5, 0.5])  # 4:1 spread
        c = classical_c_bound(alpha, 3) / 2.0
        report = mc_risk_gamma(self.make_spec(c, sigmas=sigmas), 100_000, seed=4)
        assert report.verdict == VERDICT_DOMINATES

    def test_spec_validation(self):
        with pytest.raises(InvalidInputError):
            GammaTrialSpec(p=1, n=10, mu=0.0, sigmas_x=np.ones(1), noise=NONE, c=0.0)
        with pytest.raises(InvalidInputError):
            GammaTrialSpec(p=3, n=1, mu=0.0, sigmas_x=np.ones(3), noise=NONE, c=0.0)
        with pytest.raises(InvalidInputError):
            GammaTrialSpec(p=3, n=10, mu=0.0, sigmas_x=np.array([1.0, -1.0, 1.0]), noise=NONE, c=0.0)

    def test_alpha_beta_mapping(self):
        spec = self.make_spec(0.0, n=10, sigmas=np.array([1.0, 2.0, 0.5]))
        assert spec.alpha == 4.5
        np.testing.assert_allclose(spec.betas, 2.0 * spec.sigmas_x**2 / 10.0, atol=1e-15)


class TestKeyInequality:
    def test_analytic_value_at_origin(self):
        for p in (3, 10):
            est, se, holds = mc_key_inequality(p, np.zeros(p), NONE, 200_000, seed=1)
            assert abs(est - 1.0) < 3 * se
            assert holds

    def test_large_theta_margin_shrinks_but_holds(self):
        theta = np.full(3, 100.0 / np.sqrt(3))
        est, se, holds = mc_key_inequality(3, theta, NONE, 1_000_000, seed=2)
        assert holds
        assert est == pytest.approx(2.0, abs=0.01)  # estimate approaches 2 from below

    def test_small_p_rejected(self):
        with pytest.raises(InvalidInputError):
            mc_key_inequality(2, np.zeros(2), NONE, 1_000, seed=0)


class TestSteinGammaLemma:
    def test_identity_function_moments(self):
        # lhs = Var(X) = alpha*beta^2 = rhs = beta*E[X]
        lhs, rhs, gap = mc_stein_gamma_lemma(4.5, 0.4, "identity", 200_000, seed=1)
        assert lhs == pytest.approx(4.5 * 0.16, rel=0.05)
        assert rhs == pytest.approx(4.5 * 0.16, rel=0.05)
        assert abs(gap) < 4.0

    def test_square_function_moments(self):
        # both sides equal 2*alpha*beta^3*(alpha+1)
        alpha, beta = 1.0, 1.0
        lhs, rhs, gap = mc_stein_gamma_lemma(alpha, beta, "square", 400_000, seed=2)
        expected = 2.0 * alpha * beta**3 * (alpha + 1.0)
        assert rhs == pytest.approx(expected, rel=0.05)
        assert abs(gap) < 4.0

    @pytest.mark.parametrize("h", sorted(STEIN_CATALOG))
    def test_catalog_within_four_se(self, h):
        _, _, gap = mc_stein_gamma_lemma(4.5, 0.4, h, 200_000, seed=3)
        assert abs(gap) < 4.0

    def test_unknown_function_rejected(self):
        with pytest.raises(InvalidInputError):
            mc_stein_gamma_lemma(1.0, 1.0, "cube", 1_000, seed=0)

    def test_alpha_floor_enforced(self):
        with pytest.raises(InvalidInputError):
            mc_stein_gamma_lemma(0.005, 1.0, "log", 1_000, seed=0)

    def test_invalid_parameters(self):
        with pytest.raises(InvalidInputError):
            mc_stein_gamma_lemma(-1.0, 1.0, "square", 1_000, seed=0)
