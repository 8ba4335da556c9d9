import numpy as np
import pytest

from rieszdml import (
    AverageDerivative,
    Dataset,
    FoldPlan,
    IdentityDictionary,
    PolynomialDictionary,
    RmdInfeasibleError,
    dml_estimate,
    fit_and_score_fold,
    fold_theta,
    make_fold_plan,
    orthogonality_report,
    score_derivatives,
    score_psi,
)
from rieszdml.rmd import LambdaRule


def small_setup(seed=0, n=60, p=4, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta_star = np.zeros(p)
    beta_star[:2] = [1.0, -0.5]
    y = X @ beta_star + noise * rng.standard_normal(n)
    a = np.zeros(p)
    a[0] = 1.0
    return Dataset(y, X), IdentityDictionary(p), AverageDerivative(a), beta_star


# -- fold plans ----------------------------------------------------------------

def test_fold_plan_balance_and_partition():
    plan = make_fold_plan(23, 5, seed=1)
    sizes = np.bincount(plan.assignments, minlength=6)[1:]
    assert sizes.max() - sizes.min() <= 1
    assert sizes.sum() == 23
    all_rows = np.sort(np.concatenate([plan.fold_rows(k) for k in range(1, 6)]))
    np.testing.assert_array_equal(all_rows, np.arange(23))
    # deterministic under seed
    plan2 = make_fold_plan(23, 5, seed=1)
    np.testing.assert_array_equal(plan.assignments, plan2.assignments)


def test_fold_plan_validation():
    with pytest.raises(ValueError):
        make_fold_plan(9, 5, seed=0)  # n < 2K
    with pytest.raises(ValueError):
        FoldPlan(K=1, assignments=np.ones(4, dtype=int), seed=0)
    with pytest.raises(ValueError):
        FoldPlan(K=3, assignments=np.array([1, 1, 2, 2]), seed=0)  # empty fold


# -- score function -------------------------------------------------------------

def test_score_psi_zero_case():
    data, dic, f, _ = small_setup()
    w = (data.outcome[0], data.covariates[0])
    assert score_psi(w, 0.0, np.zeros(4), np.zeros(4), dic, f) == 0.0


def test_score_psi_arithmetic_example():
    # b(x) = (1, x), x = 2, Y = 3, beta = (1, 1), rho = (0, 1), m = (0, 1):
    # psi = 5 - (0,1)'(1,1) - (0,1)'b * (3 - (1,2)'(1,1)) = 5 - 1 - 0 = 4
    dic = PolynomialDictionary(1, degree=1)
    f = AverageDerivative(np.array([1.0]))
    w = (3.0, np.array([2.0]))
    np.testing.assert_allclose(m := f.m_of_basis(dic, w[1]), [0.0, 1.0])
    assert score_psi(w, 5.0, np.array([1.0, 1.0]), np.array([0.0, 1.0]), dic, f) == pytest.approx(4.0)


def test_score_mean_zero_at_population_truth():
    # identity dictionary over standard normal X: G = I, so beta0 = beta* and
    # rho0 = a solve the population equations with zero slack
    rng = np.random.default_rng(77)
    n, p = 100_000, 3
    X = rng.standard_normal((n, p))
    beta_star = np.array([1.0, 0.5, 0.0])
    y = X @ beta_star + rng.standard_normal(n)
    dic = IdentityDictionary(p)
    a = np.array([1.0, 0.0, 0.0])
    f = AverageDerivative(a)
    theta0 = 1.0
    m = f.m_rows(dic, X)
    psi = theta0 - m @ beta_star - (X @ a) * (y - X @ beta_star)
    tol = 3.0 * psi.std() / np.sqrt(n)
    assert abs(psi.mean()) <= tol


def test_score_derivatives_formulas_and_fd():
    rng = np.random.default_rng(5)
    dic = PolynomialDictionary(2, degree=2)
    f = AverageDerivative(np.array([1.0, -0.5]))
    for _ in range(10):
        x = rng.standard_normal(2)
        y = rng.standard_normal()
        beta = rng.standard_normal(dic.output_dim)
        rho = rng.standard_normal(dic.output_dim)
        theta = rng.standard_normal()
        d_beta, d_rho = score_derivatives((y, x), theta, beta, rho, dic, f)
        b = dic.evaluate(x)
        m = f.m_of_basis(dic, x)
        np.testing.assert_allclose(d_beta, -m + (rho @ b) * b, rtol=1e-12)
        np.testing.assert_allclose(d_rho, -b * (y - b @ beta), rtol=1e-12)
        # central finite differences, relative tolerance 1e-6
        h = 1e-6
        for j in range(dic.output_dim):
            bp, bm = beta.copy(), beta.copy()
            bp[j] += h
            bm[j] -= h
            fd = (score_psi((y, x), theta, bp, rho, dic, f)
                  - score_psi((y, x), theta, bm, rho, dic, f)) / (2 * h)
            assert fd == pytest.approx(d_beta[j], rel=1e-6, abs=1e-6)
            rp, rm = rho.copy(), rho.copy()
            rp[j] += h
            rm[j] -= h
            fd = (score_psi((y, x), theta, beta, rp, dic, f)
                  - score_psi((y, x), theta, beta, rm, dic, f)) / (2 * h)
            assert fd == pytest.approx(d_rho[j], rel=1e-6, abs=1e-6)


def test_score_derivatives_special_cases():
    data, dic, f, beta_star = small_setup(noise=0.0)
    w = (data.outcome[3], data.covariates[3])
    # rho = 0 kills the second term of d_beta
    d_beta, _ = score_derivatives(w, 0.0, beta_star, np.zeros(4), dic, f)
    np.testing.assert_allclose(d_beta, -f.m_of_basis(dic, w[1]))
    # exact fit kills d_rho
    _, d_rho = score_derivatives(w, 0.0, beta_star, np.ones(4), dic, f)
    np.testing.assert_allclose(d_rho, 0.0, atol=1e-12)


# -- fold estimates --------------------------------------------------------------

def test_fold_theta_plugin_when_rho_zero():
    data, dic, f, beta_star = small_setup()
    rows = np.arange(20)
    got = fold_theta(data, rows, beta_star, np.zeros(4), dic, f)
    m = f.m_rows(dic, data.covariates[rows])
    assert got == pytest.approx(float((m @ beta_star).mean()), rel=1e-12)


def test_fold_theta_exact_beta_noiseless():
    data, dic, f, beta_star = small_setup(noise=0.0)
    rows = np.arange(25)
    rho = np.array([2.0, -1.0, 0.5, 0.0])
    with_corr = fold_theta(data, rows, beta_star, rho, dic, f)
    plugin = fold_theta(data, rows, beta_star, np.zeros(4), dic, f)
    assert with_corr == pytest.approx(plugin, rel=1e-12)


def test_fold_theta_is_exact_root():
    data, dic, f, _ = small_setup(noise=0.5)
    rows = np.arange(30)
    rng = np.random.default_rng(4)
    beta = rng.standard_normal(4)
    rho = rng.standard_normal(4)
    theta_k = fold_theta(data, rows, beta, rho, dic, f)
    psi_mean = np.mean([
        score_psi((data.outcome[i], data.covariates[i]), theta_k, beta, rho, dic, f)
        for i in rows
    ])
    assert abs(psi_mean) <= 1e-12


def test_fold_theta_empty_fold():
    data, dic, f, _ = small_setup()
    with pytest.raises(ValueError):
        fold_theta(data, [], np.zeros(4), np.zeros(4), dic, f)


# -- the estimator ----------------------------------------------------------------

def test_dml_per_fold_mean_and_ci():
    data, dic, f, _ = small_setup(n=120, noise=0.5)
    res = dml_estimate(data, dic, f, K=4, rule=LambdaRule.fixed(0.08), seed=3)
    assert res.theta_hat == pytest.approx(res.per_fold_theta.mean(), abs=1e-12)
    lo, hi = res.ci
    assert lo <= res.theta_hat <= hi
    assert np.isfinite(res.sigma_hat) and res.sigma_hat > 0
    assert len(res.per_fold) == 4
    assert res.lambda_used["blp"] == pytest.approx(0.08)


def test_dml_exact_root_per_fold():
    data, dic, f, _ = small_setup(n=80, noise=0.4)
    res = dml_estimate(data, dic, f, K=4, rule=LambdaRule.fixed(0.1), seed=9)
    plan = make_fold_plan(data.n, 4, seed=9)
    for k in range(1, 5):
        rec = res.per_fold[k - 1]
        rows = plan.fold_rows(k)
        psi_mean = np.mean([
            score_psi((data.outcome[i], data.covariates[i]), rec.theta,
                      rec.beta, rec.rho, dic, f) for i in rows
        ])
        assert abs(psi_mean) <= 1e-12


def test_dml_degenerate_sigma_zero_outcome():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((40, 3))
    data = Dataset(np.zeros(40), X)
    dic = IdentityDictionary(3)
    f = AverageDerivative(np.array([1.0, 0.0, 0.0]))
    res = dml_estimate(data, dic, f, K=2, rule=LambdaRule.fixed(0.05), seed=0)
    assert res.sigma_hat == 0.0
    assert res.ci == (res.theta_hat, res.theta_hat)
    assert any("degenerate" in w for w in res.warnings)


def test_dml_permutation_invariance():
    data, dic, f, _ = small_setup(n=90, noise=0.6, seed=12)
    plan = make_fold_plan(90, 3, seed=5)
    res = dml_estimate(data, dic, f, rule=LambdaRule.fixed(0.1), plan=plan)
    rng = np.random.default_rng(8)
    perm = rng.permutation(90)
    data_p = Dataset(data.outcome[perm], data.covariates[perm])
    plan_p = FoldPlan(K=3, assignments=plan.assignments[perm], seed=plan.seed)
    res_p = dml_estimate(data_p, dic, f, rule=LambdaRule.fixed(0.1), plan=plan_p)
    assert res_p.theta_hat == pytest.approx(res.theta_hat, abs=1e-12)


def test_dml_scaling_in_outcome():
    # scaling Y by c > 0 and the BLP lambda by c (Riesz lambda unchanged)
    # scales theta_hat by c when the LP optima are unique
    data, dic, f, _ = small_setup(n=100, noise=0.5, seed=21)
    lam_b, lam_r = 0.09, 0.07
    c = 3.5
    res = dml_estimate(data, dic, f, K=4, rule=LambdaRule.fixed(lam_b),
                       riesz_rule=LambdaRule.fixed(lam_r), seed=2)
    data_c = Dataset(c * data.outcome, data.covariates)
    res_c = dml_estimate(data_c, dic, f, K=4, rule=LambdaRule.fixed(c * lam_b),
                         riesz_rule=LambdaRule.fixed(lam_r), seed=2)
    assert res_c.theta_hat == pytest.approx(c * res.theta_hat, rel=1e-10)


def test_cross_fitting_leak_is_rejected():
    data, dic, f, _ = small_setup()
    rule = LambdaRule.fixed(0.1)
    with pytest.raises(ValueError, match="overlap"):
        fit_and_score_fold(data, dic, f, np.arange(10), np.arange(5, 30), rule, rule)


def test_infeasible_fold_names_the_fold():
    data, dic, f, _ = small_setup(n=50, noise=0.5)
    with pytest.raises(RmdInfeasibleError, match="fold 1"):
        dml_estimate(data, dic, f, K=2, rule=LambdaRule.fixed(0.0),
                     l1_bound=1e-9, seed=0)


def test_dml_plugin_only_forces_zero_rho():
    data, dic, f, _ = small_setup(n=80, noise=0.4)
    res = dml_estimate(data, dic, f, K=2, rule=LambdaRule.fixed(0.1), seed=1,
                       plugin_only=True)
    for rec in res.per_fold:
        np.testing.assert_allclose(rec.rho, 0.0)
        assert rec.riesz_l1 == 0.0


def test_dml_k2_vs_k5_coverage():
    # same seed and DGP, two fold counts: both CIs cover theta* in >= 90%
    # of 200 replications
    from rieszdml import EstimatorConfig, SparseLinearDgp, run_monte_carlo

    p = 20
    dic = IdentityDictionary(p)
    beta = np.zeros(p)
    beta[:3] = [1.0, -0.6, 0.4]
    dgp = SparseLinearDgp(dic, beta, "normal", noise_sd=1.5)
    a = np.zeros(p)
    a[0] = 1.0
    f = AverageDerivative(a)
    for K in (2, 5):
        est = EstimatorConfig(dic, f, K=K,
                              rule=LambdaRule.gaussian_quantile(c=1.0, alpha=0.05))
        rep = run_monte_carlo(dgp, est, R=200, n=4000, seed=33, workers=2)
        assert rep.coverage >= 0.90, (K, rep.coverage)


# -- orthogonality diagnostics -----------------------------------------------------

def test_orthogonality_same_sample_bounded_by_lambda():
    from rieszdml import estimate_blp, estimate_riesz

    data, dic, f, _ = small_setup(n=100, noise=0.5, seed=31)
    rows = np.arange(data.n)
    lam = 0.12
    beta_hat, _ = estimate_blp(data, rows, dic, LambdaRule.fixed(lam))
    rho_hat, _ = estimate_riesz(data, rows, dic, f, LambdaRule.fixed(lam))
    d_beta_sup, d_rho_sup = orthogonality_report(data, dic, f, beta_hat, rho_hat)
    assert d_beta_sup <= lam + 1e-7
    assert d_rho_sup <= lam + 1e-7


def test_orthogonality_zero_outcome_case():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((50, 3))
    data = Dataset(np.zeros(50), X)
    dic = IdentityDictionary(3)
    f = AverageDerivative(np.array([1.0, 0.0, 0.0]))
    d_beta_sup, d_rho_sup = orthogonality_report(data, dic, f, np.zeros(3), np.zeros(3))
    m_bar = f.m_rows(dic, X).mean(axis=0)
    assert d_beta_sup == pytest.approx(np.abs(m_bar).max())
    assert d_rho_sup == 0.0


def test_orthogonality_population_at_truth():
    # with lambda0 = 0 population moments the report converges to (0, 0)
    rng = np.random.default_rng(15)
    n, p = 400_000, 3
    X = rng.standard_normal((n, p))
    beta_star = np.array([1.0, -0.5, 0.0])
    y = X @ beta_star + rng.standard_normal(n)
    data = Dataset(y, X)
    dic = IdentityDictionary(p)
    a = np.array([1.0, 0.0, 0.0])
    d_beta_sup, d_rho_sup = orthogonality_report(data, dic, AverageDerivative(a),
                                                 beta_star, a)
    band = 5.0 / np.sqrt(n)
    assert d_beta_sup <= band
    assert d_rho_sup <= band


def test_orthogonality_warns_when_exceeded():
    data, dic, f, _ = small_setup(n=60, noise=0.5)
    with pytest.warns(UserWarning):
        orthogonality_report(data, dic, f, np.full(4, 10.0), np.full(4, 10.0),
                             lambda_blp=1e-4, lambda_riesz=1e-4)
