# logistic_mle.py
import logging
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from config import FIT_CONFIG
from exceptions import MaxIterExceeded, NotConverged, SeparableData, SingularHessian
from models import Dataset, MleFit
from utils import log1pexp, sigmoid, sigmoid_derivative

# Настройка логирования
logger = logging.getLogger(__name__)


def log_likelihood(features: np.ndarray, outcomes: np.ndarray, beta: np.ndarray,
                   weights: Optional[np.ndarray] = None) -> float:
    """Логарифм правдоподобия Σ w_i (y_i t_i - log(1 + e^{t_i}))."""
    logits = features @ beta
    terms = outcomes * logits - log1pexp(logits)
    if weights is not None:
        terms = weights * terms
    return float(np.sum(terms))


def hessian_matrix(features: np.ndarray, logits: np.ndarray,
                   weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Положительно определенная матрица A = Σ_j w_j x_j g'(t_j) x_jᵀ."""
    curvature = sigmoid_derivative(logits)
    if weights is not None:
        curvature = weights * curvature
    return features.T @ (curvature[:, None] * features)


def check_separable(data: Dataset, weights: Optional[np.ndarray] = None) -> bool:
    """
    Проверяет линейную разделимость (полную или квазиполную) линейной программой.

    Ищется b с |b_j| <= 1, для которого (2Y_i - 1)(x_i·b) >= 0 при всех i,
    и максимизируется сумма отступов. Положительный оптимум означает, что
    хотя бы одно неравенство строгое, то есть ОМП не существует.

    Args:
        data: Набор данных
        weights: Веса наблюдений; строки с нулевым весом не учитываются

    Returns:
        True, если данные разделимы
    """
    features, outcomes = data.features, data.outcomes
    if weights is not None:
        keep = np.asarray(weights) > 0
        features, outcomes = features[keep], outcomes[keep]
    if features.shape[0] == 0:
        return True

    signed = (2.0 * outcomes - 1.0)[:, None] * features
    objective = signed.sum(axis=0)
    d = features.shape[1]

    result = linprog(-objective, A_ub=-signed, b_ub=np.zeros(signed.shape[0]),
                     bounds=[(-1.0, 1.0)] * d, method='highs')
    if result.status != 0:
        logger.warning(f"Линейная программа разделимости завершилась со статусом {result.status}: {result.message}")
        return False

    margin_sum = -float(result.fun)
    scale = float(np.abs(objective).sum() + signed.shape[0])
    separable = margin_sum > FIT_CONFIG['separability_tol'] * scale
    logger.debug(f"Проверка разделимости: сумма отступов {margin_sum:.3e}, разделимы={separable}")
    return separable


def fit_mle(data: Dataset, tol: float = FIT_CONFIG['tol'], max_iter: int = FIT_CONFIG['max_iter'],
            weights: Optional[np.ndarray] = None, beta0: Optional[np.ndarray] = None) -> MleFit:
    """
    Подгоняет ОМП логистической регрессии методом Ньютона (IRLS) с делением шага пополам.

    Args:
        data: Набор данных (без неявного свободного члена)
        tol: Допуск по бесконечной норме градиента
        max_iter: Максимальное число итераций Ньютона
        weights: Веса наблюдений (используются мультипликативным бутстрепом)
        beta0: Начальное приближение (по умолчанию нули)

    Returns:
        Сошедшаяся модель MleFit
    """
    features, outcomes = data.features, data.outcomes
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != outcomes.shape or np.any(weights < 0):
            raise ValueError("Веса должны быть неотрицательными и иметь длину n")

    active = outcomes if weights is None else outcomes[weights > 0]
    n_active = active.shape[0]
    if data.d >= n_active:
        raise SeparableData(f"d={data.d} >= n={n_active}: данные разделимы в общем положении, подгонка отклонена",
                            {'n': n_active, 'd': data.d})
    if np.all(active == active[0]):
        raise SeparableData("все отклики одинаковы: вырожденные данные, ОМП не существует",
                            {'outcome': float(active[0])})

    beta = np.zeros(data.d) if beta0 is None else np.array(beta0, dtype=float)
    loglik = log_likelihood(features, outcomes, beta, weights)
    converged = False
    grad_norm = np.inf
    iteration = 0

    for iteration in range(max_iter + 1):
        logits = features @ beta
        residual = outcomes - sigmoid(logits)
        if weights is not None:
            residual = weights * residual
        gradient = features.T @ residual
        grad_norm = float(np.max(np.abs(gradient)))

        if grad_norm <= tol:
            converged = True
            break
        if iteration == max_iter:
            break

        try:
            chol = linalg.cho_factor(hessian_matrix(features, logits, weights), lower=True)
        except linalg.LinAlgError:
            _raise_if_separable(data, weights, iteration)
            raise SingularHessian(f"Гессиан вырожден на итерации {iteration}", {'iteration': iteration})
        step = linalg.cho_solve(chol, gradient)

        # Ожидаемый прирост ниже ошибки округления logL: полный шаг без поиска
        if 0.5 * float(step @ gradient) < 1e-12 * (1.0 + abs(loglik)):
            beta = beta + step
            loglik = log_likelihood(features, outcomes, beta, weights)
            continue

        # Деление шага пополам: правдоподобие не должно убывать
        for halving in range(FIT_CONFIG['max_halvings'] + 1):
            candidate = beta + step * 0.5 ** halving
            candidate_loglik = log_likelihood(features, outcomes, candidate, weights)
            if candidate_loglik >= loglik:
                break
        else:
            logger.debug(f"Итерация {iteration}: шаг не увеличивает правдоподобие, остановка")
            break

        beta, loglik = candidate, candidate_loglik
        logger.debug(f"Итерация {iteration + 1}: logL={loglik:.10f}, |grad|={grad_norm:.3e}, шаг 1/2^{halving}")

        if np.linalg.norm(beta) > FIT_CONFIG['divergence_norm']:
            _raise_if_separable(data, weights, iteration)

    # На разделимых данных градиент затухает при ‖β‖ -> ∞, и критерий остановки срабатывает ложно
    if converged and np.max(np.abs(features @ beta)) > FIT_CONFIG['saturation_logit']:
        _raise_if_separable(data, weights, iteration)

    if not converged:
        _raise_if_separable(data, weights, iteration)
        stalled = MleFit(beta_hat=beta, logits=features @ beta, hessian_chol=None, converged=False,
                         iterations=iteration, grad_norm=grad_norm, separable=False, loglik=loglik)
        raise MaxIterExceeded(f"Метод Ньютона не сошелся за {max_iter} итераций (|grad|={grad_norm:.3e})",
                              {'iterations': iteration, 'grad_norm': grad_norm, 'fit': stalled})

    logits = features @ beta
    try:
        factor = linalg.cholesky(hessian_matrix(features, logits, weights), lower=True)
    except linalg.LinAlgError:
        _raise_if_separable(data, weights, iteration)
        raise SingularHessian("Гессиан в решении не положительно определен (неполный ранг)",
                              {'iteration': iteration})

    logger.debug(f"ОМП сошлась за {iteration} итераций, |grad|={grad_norm:.3e}")
    return MleFit(beta_hat=beta, logits=logits, hessian_chol=factor, converged=True,
                  iterations=iteration, grad_norm=grad_norm, separable=False, loglik=loglik, n=data.n)


def _raise_if_separable(data: Dataset, weights: Optional[np.ndarray], iteration: int) -> None:
    if check_separable(data, weights):
        logger.info(f"Данные линейно разделимы (обнаружено на итерации {iteration})")
        raise SeparableData("данные линейно разделимы; ОМП не существует", {'iteration': iteration})


def _require_converged(fit: MleFit) -> np.ndarray:
    if not fit.converged or fit.hessian_chol is None:
        raise NotConverged("Операция требует сошедшуюся модель")
    return fit.hessian_chol


def whitened_rows(fit: MleFit, rows: np.ndarray) -> np.ndarray:
    """Решает L z = x для каждой строки; возвращает матрицу d×k."""
    factor = _require_converged(fit)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return linalg.solve_triangular(factor, rows.T, lower=True)


def quadratic_forms(fit: MleFit, rows: np.ndarray) -> np.ndarray:
    """Векторизованные xᵀA⁻¹x для строк матрицы rows."""
    z = whitened_rows(fit, rows)
    return np.sum(z * z, axis=0)


def quadratic_form(fit: MleFit, v: np.ndarray) -> float:
    """
    Вычисляет vᵀA⁻¹v двумя треугольными решениями, без явного обращения.

    Args:
        fit: Сошедшаяся модель
        v: Вектор длины d

    Returns:
        Неотрицательное число
    """
    return float(quadratic_forms(fit, np.asarray(v, dtype=float)[None, :])[0])


def standard_se(fit: MleFit) -> np.ndarray:
    """
    Классические стандартные ошибки Вальда sqrt((A⁻¹)_jj).

    Args:
        fit: Сошедшаяся модель

    Returns:
        Вектор длины d
    """
    factor = _require_converged(fit)
    inverse_factor = linalg.solve_triangular(factor, np.eye(fit.d), lower=True)
    return np.sqrt(np.sum(inverse_factor ** 2, axis=0))
