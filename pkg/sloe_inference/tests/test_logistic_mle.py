import numpy as np
import pytest

from exceptions import MaxIterExceeded, NotConverged, SeparableData
from logistic_mle import (
    check_separable,
    fit_mle,
    hessian_matrix,
    log_likelihood,
    quadratic_form,
    quadratic_forms,
    standard_se,
)
from data_model import simulate_dataset
from models import Dataset, FeatureFamily, MleFit
from utils import log1pexp, make_rng, run_concurrent_tasks, sigmoid


@pytest.fixture
def simulated():
    data, _ = simulate_dataset(FeatureFamily.GAUSSIAN, 400, 20, 1.0, 42)
    return data


class TestUtils:
    def test_sigmoid_extremes(self):
        np.testing.assert_allclose(sigmoid(np.array([-800.0, 0.0, 800.0])), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(log1pexp(np.array([-800.0, 800.0])), [0.0, 800.0])

    def test_rng_accepts_sequences(self):
        a = make_rng([1, 2, 3]).random(3)
        b = make_rng([1, 2, 3]).random(3)
        np.testing.assert_array_equal(a, b)
        with pytest.raises(ValueError):
            make_rng(-1)

    def test_concurrent_tasks_keep_order(self):
        tasks = [lambda i=i: i * i for i in range(20)]
        assert run_concurrent_tasks(tasks, max_workers=4) == [i * i for i in range(20)]


class TestFitMle:
    def test_symmetric_four_points(self, four_point_data):
        fit = fit_mle(four_point_data)
        assert fit.converged
        np.testing.assert_allclose(fit.beta_hat, [0.0], atol=1e-12)
        np.testing.assert_allclose(standard_se(fit), [1.0], rtol=1e-12)
        assert fit.kappa == pytest.approx(0.25)

    def test_gradient_vanishes_at_solution(self, simulated):
        fit = fit_mle(simulated)
        gradient = simulated.features.T @ (simulated.outcomes - sigmoid(fit.logits))
        assert np.max(np.abs(gradient)) <= 1e-8
        assert fit.loglik == pytest.approx(log_likelihood(simulated.features, simulated.outcomes, fit.beta_hat))

        rng = np.random.default_rng(42)
        for _ in range(5):
            shifted = fit.beta_hat + 1e-3 * rng.standard_normal(simulated.d)
            assert log_likelihood(simulated.features, simulated.outcomes, shifted) < fit.loglik

    def test_hessian_factor(self, simulated):
        fit = fit_mle(simulated)
        expected = hessian_matrix(simulated.features, fit.logits)
        np.testing.assert_allclose(fit.hessian_chol @ fit.hessian_chol.T, expected, rtol=1e-10)

    def test_separable_data(self):
        data = Dataset(features=np.array([[1.0], [2.0], [-1.0], [-2.0]]), outcomes=np.array([1, 1, 0, 0]))
        assert check_separable(data)
        with pytest.raises(SeparableData):
            fit_mle(data)

    def test_symmetric_data_not_separable(self, four_point_data):
        assert not check_separable(four_point_data)

    def test_constant_outcomes_rejected(self):
        data = Dataset(features=np.array([[1.0], [2.0], [3.0]]), outcomes=np.zeros(3))
        with pytest.raises(SeparableData):
            fit_mle(data)

    def test_dimension_not_below_n_rejected(self):
        data = Dataset(features=np.eye(3), outcomes=np.array([1, 0, 1]))
        with pytest.raises(SeparableData):
            fit_mle(data)

    def test_zero_weight_equals_deletion(self, simulated):
        weights = np.ones(simulated.n)
        weights[7] = 0.0
        weighted = fit_mle(simulated, weights=weights)
        keep = np.arange(simulated.n) != 7
        deleted = fit_mle(simulated.subset(keep))
        np.testing.assert_allclose(weighted.beta_hat, deleted.beta_hat, atol=1e-7)

    def test_warm_start_reaches_same_solution(self, simulated):
        cold = fit_mle(simulated)
        warm = fit_mle(simulated, beta0=cold.beta_hat)
        np.testing.assert_allclose(warm.beta_hat, cold.beta_hat, atol=1e-9)
        assert warm.iterations == 0

    def test_max_iter_exceeded(self, simulated):
        with pytest.raises(MaxIterExceeded) as info:
            fit_mle(simulated, max_iter=1)
        assert info.value.diagnostics['iterations'] == 1


class TestQuadraticForms:
    def test_matches_explicit_inverse(self, simulated):
        fit = fit_mle(simulated)
        inverse = np.linalg.inv(hessian_matrix(simulated.features, fit.logits))
        rows = simulated.features[:10]
        expected = np.einsum('ij,jk,ik->i', rows, inverse, rows)
        np.testing.assert_allclose(quadratic_forms(fit, rows), expected, rtol=1e-9)
        assert quadratic_form(fit, rows[0]) == pytest.approx(expected[0], rel=1e-9)
        np.testing.assert_allclose(standard_se(fit), np.sqrt(np.diag(inverse)), rtol=1e-9)

    def test_requires_converged_fit(self):
        fit = MleFit(beta_hat=[0.0], logits=[0.0, 0.0], hessian_chol=None, converged=False,
                     iterations=3, grad_norm=1.0, separable=False)
        with pytest.raises(NotConverged):
            quadratic_form(fit, np.array([1.0]))
        with pytest.raises(NotConverged):
            standard_se(fit)
