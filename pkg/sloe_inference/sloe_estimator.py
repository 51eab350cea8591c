# sloe_estimator.py
import logging
from typing import Optional

import numpy as np

from config import FIT_CONFIG, SLOE_CONFIG
from exceptions import LeverageAtOne, SeparableData, SeparableSubproblem
from logistic_mle import fit_mle, quadratic_forms
from models import Dataset, EstimatorMethod, MleFit, SignalStrength
from utils import run_concurrent_tasks, sigmoid, sigmoid_derivative

# Настройка логирования
logger = logging.getLogger(__name__)


def sloe_logits(fit: MleFit, data: Dataset) -> np.ndarray:
    """
    Приближенные leave-one-out логиты по формуле Шермана-Моррисона.

    С W_i = x_iᵀA⁻¹x_i и рычагом h_i = g'(t_i)W_i:
    S_i = t_i - W_i / (1 - h_i) · (Y_i - g(t_i)).
    Одна факторизация A обслуживает все n наблюдений.

    Args:
        fit: Сошедшаяся модель
        data: Набор данных, на котором она подогнана

    Returns:
        Вектор S длины n
    """
    logits = fit.logits
    leverage_base = quadratic_forms(fit, data.features)
    leverage = sigmoid_derivative(logits) * leverage_base
    remainder = 1.0 - leverage

    degenerate = np.flatnonzero(remainder <= SLOE_CONFIG['leverage_eps'])
    if degenerate.size:
        i = int(degenerate[0])
        logger.error(f"Рычаг наблюдения {i} равен {leverage[i]:.15f}: понижение ранга вырождено")
        raise LeverageAtOne(i, float(leverage[i]))

    residual = data.outcomes - sigmoid(logits)
    return logits - leverage_base / remainder * residual


def loo_logits_exact(data: Dataset, tol: float = FIT_CONFIG['tol'], max_iter: int = FIT_CONFIG['max_iter'],
                     fit: Optional[MleFit] = None, workers: Optional[int] = None) -> np.ndarray:
    """
    Точные leave-one-out логиты S_i = β̂_{-i}·x_i через n переподгонок.

    Каждая переподгонка стартует из β̂ полной выборки.

    Args:
        data: Набор данных
        tol: Допуск метода Ньютона
        max_iter: Максимум итераций
        fit: Готовая модель на полной выборке (иначе подгоняется)
        workers: Число потоков (по умолчанию SLOE_CONFIG['loo_workers'])

    Returns:
        Вектор S длины n
    """
    if fit is None:
        fit = fit_mle(data, tol=tol, max_iter=max_iter)
    workers = workers or SLOE_CONFIG['loo_workers']
    start = np.array(fit.beta_hat)

    def refit(i: int):
        def task() -> float:
            weights = np.ones(data.n)
            weights[i] = 0.0
            try:
                loo_fit = fit_mle(data, tol=tol, max_iter=max_iter, weights=weights, beta0=start)
            except SeparableData as e:
                raise SeparableSubproblem(i, e.diagnostics) from e
            return float(data.features[i] @ loo_fit.beta_hat)
        return task

    logger.info(f"Точный LOO: {data.n} переподгонок, потоков {workers}")
    return np.array(run_concurrent_tasks([refit(i) for i in range(data.n)], max_workers=workers))


def corrupted_signal_strength(loo_logits: np.ndarray, method: EstimatorMethod = EstimatorMethod.SLOE,
                              diagnostics: Optional[dict] = None) -> SignalStrength:
    """
    Оценка η̂² как выборочной дисперсии LOO-логитов (деление на n).

    Args:
        loo_logits: Вектор S
        method: Метод, которым получены S
        diagnostics: Дополнительные метаданные

    Returns:
        SignalStrength
    """
    values = np.asarray(loo_logits, dtype=float)
    if values.shape[0] < 2:
        raise ValueError(f"Для оценки дисперсии нужно n >= 2, получено {values.shape[0]}")
    eta_sq = float(np.var(values))
    info = {'n': int(values.shape[0]), 'mean_logit': float(np.mean(values))}
    info.update(diagnostics or {})
    return SignalStrength(eta_sq=eta_sq, method=method, loo_logits=values, diagnostics=info)


def estimate_signal_strength(fit: MleFit, data: Dataset, method: EstimatorMethod = EstimatorMethod.SLOE,
                             workers: Optional[int] = None) -> SignalStrength:
    """
    Оценивает η̂² выбранным методом (SLOE или точный LOO).

    Args:
        fit: Сошедшаяся модель
        data: Набор данных
        method: SLOE или LOO_EXACT
        workers: Число потоков точного LOO (по умолчанию SLOE_CONFIG['loo_workers'])

    Returns:
        SignalStrength
    """
    if method == EstimatorMethod.SLOE:
        logits = sloe_logits(fit, data)
    elif method == EstimatorMethod.LOO_EXACT:
        logits = loo_logits_exact(data, fit=fit, workers=workers)
    else:
        raise ValueError(f"Метод {method} не оценивается по LOO-логитам; используйте probe_frontier")

    signal = corrupted_signal_strength(logits, method)
    logger.info(f"η̂² ({method.value}) = {signal.eta_sq:.6f} при n={data.n}, κ={data.kappa:.4f}")
    return signal
