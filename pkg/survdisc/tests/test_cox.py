import numpy as np
import pytest

from conftest import random_dataset
from core import SurvivalDataset
from cox import (
    FitOptions,
    breslow_cumulative_hazard,
    fit_cox,
    linear_predictor,
    partial_gradient,
    partial_hessian,
    partial_log_likelihood,
    predict_survival,
)
from errors import DimensionMismatch, NoEvents, NotConverged, Singular


def test_log_likelihood_by_hand():
    ds = SurvivalDataset(time=[1.0, 2.0, 3.0, 4.0], event=[1, 0, 1, 1], X=[[1.0], [0.0], [0.0], [0.0]])
    assert partial_log_likelihood(ds, [0.0]) == pytest.approx(-np.log(8.0))
    beta = 0.7
    expected = beta - np.log(np.exp(beta) + 3.0) - np.log(2.0)
    assert partial_log_likelihood(ds, [beta]) == pytest.approx(expected)


def test_breslow_ties():
    ds = SurvivalDataset(time=[1.0, 1.0, 2.0], event=[1, 1, 1], X=[[1.0], [0.0], [0.0]])
    b = 0.5
    denominator = np.exp(b) + 2.0
    expected = (b - np.log(denominator)) + (0.0 - np.log(denominator))
    assert partial_log_likelihood(ds, [b]) == pytest.approx(expected)


def test_log_likelihood_stable_for_large_scores():
    ds = SurvivalDataset(time=[1.0, 2.0, 3.0], event=[1, 1, 1], X=[[1.0], [2.0], [3.0]])
    value = partial_log_likelihood(ds, [400.0])
    assert np.isfinite(value)


def test_gradient_matches_finite_differences(stream):
    ds = random_dataset(stream, 120, p=3)
    beta = np.array([0.3, -0.2, 0.1])
    grad = partial_gradient(ds, beta)
    h = 1e-5
    numeric = np.array(
        [
            (partial_log_likelihood(ds, beta + h * e) - partial_log_likelihood(ds, beta - h * e)) / (2 * h)
            for e in np.eye(3)
        ]
    )
    assert np.max(np.abs(grad - numeric)) <= 1e-6 * max(1.0, np.max(np.abs(grad)))


def test_hessian_matches_finite_differences(stream):
    ds = random_dataset(stream, 120, p=3, integer_times=True)
    beta = np.array([0.3, -0.2, 0.1])
    hessian = partial_hessian(ds, beta)
    h = 1e-5
    numeric = np.column_stack(
        [(partial_gradient(ds, beta + h * e) - partial_gradient(ds, beta - h * e)) / (2 * h) for e in np.eye(3)]
    )
    np.testing.assert_allclose(hessian, numeric, rtol=1e-5, atol=1e-6)
    assert np.all(np.linalg.eigvalsh(hessian) < 0)


def test_fit_converges_and_increases_likelihood(stream):
    ds = random_dataset(stream, 400, p=3)
    fit = fit_cox(ds)
    assert fit.converged
    assert fit.gradient_norm <= 1e-8
    assert np.all(np.diff(fit.loglik_history) >= -1e-10)
    assert fit.log_partial_likelihood == pytest.approx(partial_log_likelihood(ds, fit.beta))


def test_fit_recovers_true_coefficients():
    from streams import make_stream

    ds = random_dataset(make_stream(7, 0, "cox-recovery"), 3000, p=2)
    fit = fit_cox(ds)
    np.testing.assert_allclose(fit.beta, [1.0, -0.5], atol=0.15)


def test_collinear_design_is_singular(stream):
    ds = random_dataset(stream, 80, p=1)
    doubled = ds.with_covariates(np.hstack([ds.X, ds.X]))
    with pytest.raises(Singular):
        fit_cox(doubled)


def test_iteration_cap(stream):
    ds = random_dataset(stream, 200, p=2)
    with pytest.raises(NotConverged) as info:
        fit_cox(ds, FitOptions(max_iterations=1))
    assert info.value.fit is not None
    fit = fit_cox(ds, FitOptions(max_iterations=1, strict=False))
    assert not fit.converged
    assert fit.iterations == 1


def test_fit_requires_events():
    ds = SurvivalDataset(time=[1.0, 2.0], event=[0, 0], X=[[0.0], [1.0]])
    with pytest.raises(NoEvents):
        fit_cox(ds)


def test_fit_options_validation():
    with pytest.raises(ValueError):
        FitOptions(max_iterations=0)


def test_linear_predictor_dimension_check():
    with pytest.raises(DimensionMismatch):
        linear_predictor([1.0, 2.0], np.zeros((3, 3)))
    np.testing.assert_allclose(linear_predictor([1.0, 2.0], [[1.0, 1.0]]), [3.0])


def test_breslow_without_covariates_is_nelson_aalen():
    ds = SurvivalDataset(time=[1.0, 2.0, 3.0], event=[1, 1, 1])
    times, hazard = breslow_cumulative_hazard(ds, np.zeros(0))
    assert times.tolist() == [1.0, 2.0, 3.0]
    np.testing.assert_allclose(hazard, [1 / 3, 1 / 3 + 1 / 2, 1 / 3 + 1 / 2 + 1])


def test_predict_survival_orders_by_risk(stream):
    ds = random_dataset(stream, 300, p=2)
    fit = fit_cox(ds)
    low, high = fit.beta * -1.0, fit.beta * 1.0
    t = float(np.median(ds.time))
    assert predict_survival(fit, ds, low, t)[0] > predict_survival(fit, ds, high, t)[0]
    assert predict_survival(fit, ds, low, 0.0)[0] == 1.0


def test_fit_is_invariant_to_row_order(stream):
    ds = random_dataset(stream, 200, p=3)
    shuffled = ds.take(stream.permutation(ds.n))
    np.testing.assert_allclose(fit_cox(shuffled).beta, fit_cox(ds).beta, rtol=1e-7, atol=1e-8)
    assert partial_log_likelihood(shuffled, [0.4, -0.1, 0.2]) == pytest.approx(
        partial_log_likelihood(ds, [0.4, -0.1, 0.2]), rel=1e-12
    )


def test_fit_is_equivariant_to_covariate_scaling(stream):
    ds = random_dataset(stream, 200, p=3)
    scale = np.array([2.0, 0.5, 10.0])
    scaled = fit_cox(ds.with_covariates(ds.X * scale))
    fit = fit_cox(ds)
    np.testing.assert_allclose(scaled.beta * scale, fit.beta, rtol=1e-6, atol=1e-8)
    assert scaled.log_partial_likelihood == pytest.approx(fit.log_partial_likelihood, rel=1e-10)


def test_gradient_matches_finite_differences_on_random_draws():
    from streams import make_stream

    h = 1e-5
    for draw in range(50):
        rng = make_stream(11, draw, "gradient")
        p = 1 + draw % 3
        ds = random_dataset(rng, 40 + draw, p=p, integer_times=draw % 2 == 1)
        beta = 0.5 * rng.standard_normal(p)
        grad = partial_gradient(ds, beta)
        numeric = np.array(
            [
                (partial_log_likelihood(ds, beta + h * e) - partial_log_likelihood(ds, beta - h * e)) / (2 * h)
                for e in np.eye(p)
            ]
        )
        assert np.max(np.abs(grad - numeric)) <= 1e-5 * max(1.0, np.max(np.abs(grad))), draw
