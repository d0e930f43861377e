import math

import numpy as np
import pytest

from conftest import random_dataset
from lassoboot.bootstrap import (
    BootstrapError,
    Scheme,
    ThresholdedEstimate,
    WeightDistribution,
    _perturbation_from_weights,
    centered_residuals,
    default_threshold,
    draw_weights,
    naive_perturbation_bootstrap,
    paired_bootstrap,
    paired_counts,
    perturbation_bootstrap,
    pseudo_responses,
    residual_bootstrap,
    run_scheme,
    threshold_estimate,
    weighted_lasso,
)
from lassoboot.lasso import Dataset, LassoFit, SolverOptions, fit_lasso, lambda_max
from lassoboot.simulation import SimulationScenario, cross_validate_lambda, draw_scenario
from oracles import perturbation_objective_minimizer


def _fit_and_threshold(data, frac=0.1, scale=1.0):
    fit = fit_lasso(data, frac * lambda_max(data))
    return fit, threshold_estimate(fit, default_threshold(data.n, scale))


def _manual_fit(beta, lam=1.0):
    beta = np.asarray(beta, dtype=np.float64)
    return LassoFit(beta=beta, lam=lam, objective=0.0, kkt_gap=0.0, iterations=0, converged=True)


@pytest.fixture(scope="module")
def scenario_1000():
    sc = SimulationScenario(n=1000)
    draw = draw_scenario(sc, 0)
    data = draw.dataset
    lam = cross_validate_lambda(data, rng=11)
    fit = fit_lasso(data, lam)
    est = threshold_estimate(fit, default_threshold(data.n, sc.threshold_scale))
    return draw, fit, est


# ---------------------------------------------------------------- thresholds


def test_default_threshold_values():
    assert default_threshold(10000) == pytest.approx(0.1)
    assert default_threshold(16) == pytest.approx(0.5)
    assert default_threshold(16, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        default_threshold(1)
    with pytest.raises(ValueError):
        default_threshold(100, 0.0)


def test_threshold_rate_diverges():
    ratio = [default_threshold(n) * math.sqrt(n) / math.log(n) for n in (1e2, 1e4, 1e6)]
    assert ratio[0] < ratio[1] < ratio[2]


@pytest.mark.parametrize("beta, expected", [((2.0, -1.5), (2.0, -1.5)), ((0.05, -1.5), (0.0, -1.5)),
                                            ((0.1, 0.0), (0.0, 0.0))])
def test_threshold_estimate(beta, expected):
    est = threshold_estimate(_manual_fit(beta), 0.1)
    assert tuple(est.beta_tilde) == expected
    assert list(est.support) == [j for j, b in enumerate(expected) if b != 0]
    assert list(est.signs) == [np.sign(b) for b in expected if b != 0]


def test_threshold_estimate_rejects_nonpositive():
    with pytest.raises(ValueError):
        threshold_estimate(_manual_fit([1.0]), 0.0)


# ------------------------------------------------------------------- weights


def test_exponential_weight_moments():
    g = draw_weights(WeightDistribution.exponential(1.0), 10**6, np.random.default_rng(1))
    assert g.min() >= 0
    assert abs(g.mean() - 1.0) < 0.01
    assert abs(g.var() - 1.0) < 0.02


def test_beta_weight_moments():
    dist = WeightDistribution.beta(0.5)
    assert dist.params == (0.5, 1.5)
    assert dist.mu == pytest.approx(0.25) and dist.sigma2 == pytest.approx(0.0625)
    g = draw_weights(dist, 10**6, np.random.default_rng(2))
    assert abs(g.mean() - 0.25) < 0.01
    assert abs(g.var() - 0.0625) < 0.02


def test_weights_deterministic():
    dist = WeightDistribution.exponential(2.0)
    a = draw_weights(dist, 50, np.random.default_rng(3))
    b = draw_weights(dist, 50, np.random.default_rng(3))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("make", [lambda: WeightDistribution.exponential(0.0),
                                  lambda: WeightDistribution.beta(1.0),
                                  lambda: WeightDistribution.beta(0.5, 2.0),
                                  lambda: WeightDistribution("gamma", (1.0,))])
def test_invalid_weight_laws(make):
    with pytest.raises(ValueError):
        make()


def test_weight_law_round_trip():
    for dist in (WeightDistribution.exponential(3.0), WeightDistribution.beta(0.2)):
        assert WeightDistribution.from_dict(dist.to_dict()) == dist


# ------------------------------------------------------------ pseudo responses


def test_pseudo_responses_vanish_at_mean(rng):
    data = random_dataset(rng, 20, 3)
    _, est = _fit_and_threshold(data)
    z = pseudo_responses(data, est, np.full(20, 2.0), 2.0)
    assert np.array_equal(z, data.X @ est.beta_tilde)


def test_pseudo_response_arithmetic():
    # y_tilde = 2, residual 1, mu = 1, G = 3  ->  z = 2 + 1 * 2 = 4
    data = Dataset(np.array([[1.0], [1.0]]), np.array([3.0, 2.0]))
    est = ThresholdedEstimate(np.array([2.0]), 0.1, np.array([0]), np.array([1.0]))
    z = pseudo_responses(data, est, np.array([3.0, 1.0]), 1.0)
    assert z[0] == 4.0 and z[1] == 2.0


def test_pseudo_responses_validation(rng):
    data = random_dataset(rng, 10, 2)
    _, est = _fit_and_threshold(data)
    with pytest.raises(ValueError):
        pseudo_responses(data, est, np.ones(9), 1.0)
    with pytest.raises(ValueError):
        pseudo_responses(data, est, np.ones(10), 0.0)


def test_pseudo_responses_centered(rng):
    data = random_dataset(rng, 8, 2)
    _, est = _fit_and_threshold(data)
    dist = WeightDistribution.exponential()
    G = np.stack([draw_weights(dist, 8, rng) for _ in range(10**5)])
    Z = pseudo_responses(data, est, G, dist.mu)
    y_tilde = data.X @ est.beta_tilde
    se = Z.std(axis=0) / math.sqrt(Z.shape[0])
    assert np.all(np.abs(Z.mean(axis=0) - y_tilde) < 3 * se + 1e-12)


# -------------------------------------------------------- perturbation scheme


def test_degenerate_weights_give_identical_rows(rng):
    data = random_dataset(rng, 30, 4)
    fit, est = _fit_and_threshold(data)
    G = np.ones((5, 30))
    t, conv = _perturbation_from_weights(data, fit, est, G, 1.0, None)
    assert conv.all()
    expected = fit_lasso(Dataset(data.X, data.X @ est.beta_tilde), fit.lam).beta
    T = math.sqrt(30) * (t - est.beta_tilde)
    assert np.allclose(T, math.sqrt(30) * (expected - est.beta_tilde), atol=1e-7)
    assert np.ptp(T, axis=0).max() < 1e-9


def test_two_objective_forms_agree(rng):
    for _ in range(10):
        data = random_dataset(rng, 30, 4)
        fit, est = _fit_and_threshold(data, frac=rng.uniform(0.05, 0.5))
        G = rng.exponential(size=30)
        t, _ = _perturbation_from_weights(data, fit, est, G[None], 1.0, SolverOptions(kkt_tol=1e-11, tol=1e-13))
        ref = perturbation_objective_minimizer(data.X, data.y, data.X @ est.beta_tilde, G, 1.0, fit.lam)
        assert np.max(np.abs(t[0] - ref)) < 1e-6


def test_draw_record_invariant(rng):
    data = random_dataset(rng, 40, 3)
    fit, est = _fit_and_threshold(data)
    for scheme in Scheme:
        draws = run_scheme(scheme, data, fit, est, 25, rng=4)
        assert draws.B == 25 and draws.scheme is scheme
        assert np.array_equal(draws.T_star, math.sqrt(40) * (draws.beta_star - draws.center))
        assert np.array_equal(draws.center, est.beta_tilde)
        assert np.all(np.isfinite(draws.T_star))
        assert draws.lam == fit.lam


def test_schemes_deterministic(rng):
    data = random_dataset(rng, 40, 3)
    fit, est = _fit_and_threshold(data)
    for scheme in Scheme:
        a = run_scheme(scheme, data, fit, est, 30, rng=9)
        b = run_scheme(scheme, data, fit, est, 30, rng=9)
        assert np.array_equal(a.T_star, b.T_star)
        assert a.seed == 9


def test_B_must_be_positive(rng):
    data = random_dataset(rng, 20, 2)
    fit, est = _fit_and_threshold(data)
    for scheme in Scheme:
        with pytest.raises(ValueError):
            run_scheme(scheme, data, fit, est, 0, rng=1)


def test_too_many_flagged_replicates_fail(rng):
    data = random_dataset(rng, 40, 6)
    fit, est = _fit_and_threshold(data, frac=0.01)
    with pytest.raises(BootstrapError):
        perturbation_bootstrap(data, fit, est, B=20, rng=1, opts=SolverOptions(max_sweeps=1))


def test_row_order_invariance(rng):
    data = random_dataset(rng, 30, 3)
    fit, est = _fit_and_threshold(data)
    perm = rng.permutation(30)
    shuffled = Dataset(data.X[perm], data.y[perm])
    fit2 = fit_lasso(shuffled, fit.lam)
    est2 = threshold_estimate(fit2, est.a_n)
    G = rng.exponential(size=(20, 30))
    a, _ = _perturbation_from_weights(data, fit, est, G, 1.0, None)
    b, _ = _perturbation_from_weights(shuffled, fit2, est2, G[:, perm], 1.0, None)
    assert np.allclose(a, b, atol=1e-8)


def test_perturbation_centering_on_zero_coefficients(scenario_1000):
    from lassoboot.limit import limit_objective_from_fit, sample_limit_argmin

    draw, fit, est = scenario_1000
    zeros = draw.beta_true == 0
    T = perturbation_bootstrap(draw.dataset, fit, est, B=5000, rng=21).T_star[:, zeros]
    # the reference centre is the mean of the limit law, not 0: sample
    # correlations tie the zero coordinates to the penalty-shifted active block
    V = sample_limit_argmin(limit_objective_from_fit(draw.dataset, fit, est), rng=5, draws=20000)[:, zeros]
    se = np.sqrt(T.var(axis=0) / T.shape[0] + V.var(axis=0) / V.shape[0])
    assert np.all(np.abs(T.mean(axis=0) - V.mean(axis=0)) < 4 * se)


def test_naive_scheme_offset(scenario_1000):
    draw, fit, est = scenario_1000
    data = draw.dataset
    mod = perturbation_bootstrap(data, fit, est, B=500, rng=22)
    naive = naive_perturbation_bootstrap(data, fit, est, B=500, rng=22)
    active = draw.beta_true != 0
    diff = naive.T_star[:, active].mean(axis=0) - mod.T_star[:, active].mean(axis=0)
    se = np.sqrt((naive.T_star[:, active].var(axis=0) + mod.T_star[:, active].var(axis=0)) / 500)
    assert np.any(np.abs(diff) > 3 * se)


def test_naive_constant_weights(rng):
    data = random_dataset(rng, 30, 4)
    fit, est = _fit_and_threshold(data)
    c = 2.5
    t, conv = weighted_lasso(data.X, data.y, np.full((1, 30), c), fit.lam)
    assert conv.all()
    assert np.allclose(t[0], fit_lasso(data, fit.lam / c).beta, atol=1e-8)


# ------------------------------------------------------------ residual scheme


def test_residual_scheme_degenerate_residuals(rng):
    X = rng.standard_normal((30, 3))
    beta_tilde = np.array([1.0, 0.0, -2.0])
    data = Dataset(X, X @ beta_tilde + 0.7)
    fit = _manual_fit(beta_tilde, lam=2.0)
    est = threshold_estimate(fit, 0.1)
    assert np.allclose(centered_residuals(data, est), 0.0, atol=1e-12)
    draws = residual_bootstrap(data, fit, est, B=10, rng=1)
    assert np.ptp(draws.T_star, axis=0).max() < 1e-9
    ref = fit_lasso(Dataset(X, X @ beta_tilde), 2.0).beta
    assert np.allclose(draws.beta_star[0], ref, atol=1e-8)


def test_residual_resamples_from_centered_multiset(rng):
    data = random_dataset(rng, 25, 2)
    fit, est = _fit_and_threshold(data)
    r = centered_residuals(data, est)
    assert abs(r.mean()) < 1e-12
    gen = np.random.default_rng(5)
    sample = r[gen.integers(0, 25, size=25)]
    assert set(sample) <= set(r)


def _covariance_gaps(heteroscedastic):
    sc = SimulationScenario(n=1000, error_case="II", heteroscedastic=heteroscedastic)
    data = draw_scenario(sc, 0).dataset
    fit = fit_lasso(data, cross_validate_lambda(data, rng=3))
    est = threshold_estimate(fit, default_threshold(data.n, sc.threshold_scale))
    pb = np.cov(perturbation_bootstrap(data, fit, est, B=2000, rng=1).T_star.T)
    rb = np.cov(residual_bootstrap(data, fit, est, B=2000, rng=2).T_star.T)
    rb_again = np.cov(residual_bootstrap(data, fit, est, B=2000, rng=5).T_star.T)
    return np.linalg.norm(pb - rb), np.linalg.norm(rb_again - rb)


def test_residual_matches_perturbation_when_homoscedastic():
    # the between-scheme gap is measured against the seed-to-seed gap of one
    # scheme, which is the Monte Carlo noise floor at this B
    gap, floor = _covariance_gaps(heteroscedastic=False)
    assert gap < 3 * floor
    gap, floor = _covariance_gaps(heteroscedastic=True)
    assert gap > 4 * floor


# -------------------------------------------------------------- paired scheme


def test_paired_indices_deterministic(rng):
    X = rng.standard_normal((15, 2))
    a, _ = paired_counts(X, 30, np.random.default_rng(6))
    b, _ = paired_counts(X, 30, np.random.default_rng(6))
    assert np.array_equal(a, b)
    assert np.all(a.sum(axis=1) == 15)


def test_paired_two_point_enumeration():
    X = np.array([[1.0], [3.0]])
    y = np.array([2.0, 1.0])
    data = Dataset(X, y)
    lam = 0.5
    fit = fit_lasso(data, lam)
    est = threshold_estimate(fit, 0.01)
    draws = paired_bootstrap(data, fit, est, B=10**4, rng=7)
    # the three possible resamples: {1,1}, {1,2}, {2,2}
    outcomes = {
        "11": fit_lasso(Dataset(X[[0, 0]], y[[0, 0]]), lam).beta[0],
        "12": fit.beta[0],
        "22": fit_lasso(Dataset(X[[1, 1]], y[[1, 1]]), lam).beta[0],
    }
    got = draws.beta_star[:, 0]
    freq = {k: np.mean(np.abs(got - v) < 1e-9) for k, v in outcomes.items()}
    assert sum(freq.values()) == pytest.approx(1.0)
    for k, p in {"11": 0.25, "12": 0.5, "22": 0.25}.items():
        assert abs(freq[k] - p) < 0.02


def test_paired_identical_rows_closed_form():
    # n copies of (x, y): minimize n (y - x t)^2 + lam |t|
    x, y, n, lam = 2.0, 3.0, 4, 5.0
    X = np.full((n, 1), x)
    t, conv = weighted_lasso(np.array([[x], [1.0]]), np.array([y, 0.0]), np.array([[n, 0.0]]), lam)
    expected = soft_threshold_closed = max(n * x * y - lam / 2, 0) / (n * x * x)
    assert conv.all() and t[0, 0] == pytest.approx(expected)
    assert fit_lasso(Dataset(X, np.full(n, y)), lam).beta[0] == pytest.approx(soft_threshold_closed)


def test_paired_redraws_degenerate_resamples():
    # column 2 is nonzero in one row only, so many resamples miss it
    X = np.zeros((4, 2))
    X[:, 0] = [1.0, 2.0, 3.0, 4.0]
    X[0, 1] = 1.0
    counts, bad = paired_counts(X, 200, np.random.default_rng(8))
    good = ~bad
    assert np.all(counts[good, 0] > 0)
    # probability a resample misses row 0 is (3/4)^4; ten misses in a row are rare
    assert bad.mean() < 0.05


# ----------------------------------------------------------- sign capture


@pytest.mark.slow
def test_threshold_captures_zero_coefficients():
    sc = SimulationScenario(n=1000)
    captured = 0
    from lassoboot.simulation import _stream, fixed_design

    X = fixed_design(sc)
    for m in range(200):
        draw = draw_scenario(sc, m, X)
        data = draw.dataset
        lam = cross_validate_lambda(data, rng=_stream(sc.seed, 1, m, 2))
        est = threshold_estimate(fit_lasso(data, lam), default_threshold(data.n, sc.threshold_scale))
        captured += bool(np.all(est.beta_tilde[draw.beta_true == 0] == 0))
    assert captured / 200 >= 0.95
