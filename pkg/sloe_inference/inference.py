# inference.py
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import norm

from config import SIMULATION_DEFAULTS, SOLVER_CONFIG
from exceptions import (
    KappaMismatch,
    MaxIterExceeded,
    NoConvergence,
    SeparableData,
    SingularHessian,
)
from logistic_mle import _require_converged, fit_mle, quadratic_forms, standard_se
from models import (
    CoefficientRecord,
    CorrectionParams,
    Dataset,
    EstimatorMethod,
    InferenceMethod,
    InferenceReport,
    MleFit,
    PredictionRecord,
    SignalStrength,
)
from sloe_estimator import estimate_signal_strength
from state_evolution import SolverOptions, solve_eta
from utils import SeedLike, column_names_for, make_rng, sigmoid

# Настройка логирования
logger = logging.getLogger(__name__)

COVARIANCE_MODES = ('identity', 'empirical')

# Допуск сравнения κ модели и параметров коррекции
KAPPA_TOL = 1e-12

# Регуляризация эмпирической ковариации: доля следа на диагональ
COVARIANCE_RIDGE = 1e-8


@dataclass(frozen=True)
class FeatureScaling:
    """
    Масштабы τ̂ для коррекции при произвольной ковариации признаков.

    В режиме 'identity' τ̂_j = 1 и τ̂(x) = ‖x‖₂. В режиме 'empirical'
    τ̂_j = 1/sqrt((Σ̂⁻¹)_jj) и τ̂(x) = sqrt(xᵀΣ̂⁻¹x), где Σ̂ - выборочная
    ковариация признаков с гребневой добавкой.
    """
    mode: str
    precision_chol: Optional[np.ndarray] = None

    def coefficient_tau(self, d: int) -> np.ndarray:
        if self.mode == 'identity':
            return np.ones(d)
        inverse_factor = linalg.solve_triangular(self.precision_chol, np.eye(d), lower=True)
        precision_diag = np.sum(inverse_factor ** 2, axis=0)
        return 1.0 / np.sqrt(precision_diag)

    def point_tau(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if self.mode == 'identity':
            return np.linalg.norm(rows, axis=1)
        z = linalg.solve_triangular(self.precision_chol, rows.T, lower=True)
        return np.sqrt(np.sum(z * z, axis=0))


def feature_scaling(covariance: str = 'identity', features: Optional[np.ndarray] = None) -> FeatureScaling:
    """
    Строит FeatureScaling для выбранного режима.

    Args:
        covariance: 'identity' или 'empirical'
        features: Матрица признаков обучающей выборки (нужна для 'empirical')

    Returns:
        FeatureScaling
    """
    if covariance not in COVARIANCE_MODES:
        raise ValueError(f"Режим ковариации должен быть одним из {COVARIANCE_MODES}, получено '{covariance}'")
    if covariance == 'identity':
        return FeatureScaling('identity')
    if features is None:
        raise ValueError("Для режима 'empirical' нужны признаки обучающей выборки")

    features = np.atleast_2d(np.asarray(features, dtype=float))
    sigma = np.atleast_2d(np.cov(features, rowvar=False, bias=True))
    d = sigma.shape[0]
    sigma = sigma + COVARIANCE_RIDGE * np.trace(sigma) / d * np.eye(d)
    try:
        factor = linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError as e:
        raise ValueError(f"Эмпирическая ковариация признаков вырождена: {e}") from e
    return FeatureScaling('empirical', factor)


def _check_level(level: float) -> float:
    if not (0.0 < level < 1.0):
        raise ValueError(f"Уровень доверия должен лежать в (0, 1), получено {level}")
    return float(norm.ppf(0.5 + level / 2.0))


def _check_params(fit: MleFit, params: CorrectionParams) -> None:
    _require_converged(fit)
    if abs(fit.kappa - params.kappa) > KAPPA_TOL:
        raise KappaMismatch(f"κ модели {fit.kappa:.12f} не совпадает с κ параметров {params.kappa:.12f}",
                            {'fit_kappa': fit.kappa, 'params_kappa': params.kappa})
    if not np.isfinite(params.residual_norm) or params.residual_norm > SOLVER_CONFIG['tol']:
        raise NoConvergence(f"Параметры коррекции не решены (невязка {params.residual_norm:.3e})",
                            {'residual_norm': params.residual_norm})


def _two_sided_p(z: np.ndarray) -> np.ndarray:
    return np.clip(2.0 * norm.sf(np.abs(z)), 0.0, 1.0)


def _coefficient_names(d: int, names: Optional[Sequence[str]]) -> Sequence[str]:
    if names is None:
        return column_names_for(d)
    if len(names) != d:
        raise ValueError(f"Число имен ({len(names)}) не совпадает с числом коэффициентов ({d})")
    return names


def _prediction_records(logit_hat: np.ndarray, center: np.ndarray,
                        half_width: np.ndarray) -> Tuple[PredictionRecord, ...]:
    lo = center - half_width
    hi = center + half_width
    return tuple(
        PredictionRecord(logit_hat=float(t), logit_debiased=float(c), logit_ci=(float(a), float(b)),
                         prob_hat=float(sigmoid(c)), prob_ci=(float(sigmoid(a)), float(sigmoid(b))))
        for t, c, a, b in zip(logit_hat, center, lo, hi)
    )


def corrected_predictions(fit: MleFit, params: CorrectionParams, rows: np.ndarray, level: float,
                          scaling: Optional[FeatureScaling] = None) -> Tuple[PredictionRecord, ...]:
    """
    Скорректированные интервалы для логитов и вероятностей в нескольких тестовых точках.

    Логит: β̂·x/α ± z·σ★·τ̂(x)/(α√n); интервал вероятности - g от концов.

    Args:
        fit: Сошедшаяся модель
        params: Параметры коррекции при κ модели
        rows: Матрица k×d тестовых точек
        level: Уровень доверия
        scaling: Масштабы τ̂ (по умолчанию identity)

    Returns:
        Кортеж PredictionRecord
    """
    z = _check_level(level)
    _check_params(fit, params)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != fit.d or not np.all(np.isfinite(rows)):
        raise ValueError(f"Тестовые точки должны быть конечными и иметь {fit.d} признаков")
    scaling = scaling or FeatureScaling('identity')

    logit_hat = rows @ fit.beta_hat
    center = logit_hat / params.alpha
    half_width = z * params.sigma_star * scaling.point_tau(rows) / (params.alpha * np.sqrt(fit.n))
    return _prediction_records(logit_hat, center, half_width)


def prediction_inference(fit: MleFit, params: CorrectionParams, x: np.ndarray, level: float,
                         scaling: Optional[FeatureScaling] = None) -> PredictionRecord:
    """Скорректированный интервал для одной тестовой точки x."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x должен быть вектором длины d")
    return corrected_predictions(fit, params, x[None, :], level, scaling)[0]


def coefficient_inference(fit: MleFit, params: CorrectionParams, level: float,
                          scaling: Optional[FeatureScaling] = None, names: Optional[Sequence[str]] = None,
                          test_features: Optional[np.ndarray] = None) -> InferenceReport:
    """
    Скорректированные интервалы и p-значения для коэффициентов.

    CI_j = β̂_j/α ± z·σ★/(α·τ̂_j·√n), Z_j = √n·τ̂_j·β̂_j/σ★, p_j = 2(1 - Φ(|Z_j|)).
    Интервал исключает 0 тогда и только тогда, когда p_j < 1 - level.

    Args:
        fit: Сошедшаяся модель
        params: Параметры коррекции при κ модели
        level: Уровень доверия 1-δ
        scaling: Масштабы τ̂ (по умолчанию identity)
        names: Имена коэффициентов
        test_features: Необязательные тестовые точки для интервалов предсказаний

    Returns:
        InferenceReport с методом CORRECTED
    """
    z = _check_level(level)
    _check_params(fit, params)
    scaling = scaling or FeatureScaling('identity')
    names = _coefficient_names(fit.d, names)

    sqrt_n = np.sqrt(fit.n)
    tau = scaling.coefficient_tau(fit.d)
    debiased = fit.beta_hat / params.alpha
    se = params.sigma_star / (params.alpha * tau * sqrt_n)
    stats = sqrt_n * tau * fit.beta_hat / params.sigma_star
    p_values = _two_sided_p(stats)

    coefficients = tuple(
        CoefficientRecord(name=str(name), beta_hat=float(b), beta_debiased=float(c), se_corrected=float(s),
                          ci_lo=float(c - z * s), ci_hi=float(c + z * s), z=float(t), p_value=float(p))
        for name, b, c, s, t, p in zip(names, fit.beta_hat, debiased, se, stats, p_values)
    )
    predictions = ()
    if test_features is not None:
        predictions = corrected_predictions(fit, params, test_features, level, scaling)

    return InferenceReport(coefficients=coefficients, predictions=predictions, method=InferenceMethod.CORRECTED,
                           level=level, params=params, covariance=scaling.mode)


def classical_inference(fit: MleFit, level: float, names: Optional[Sequence[str]] = None,
                        test_features: Optional[np.ndarray] = None) -> InferenceReport:
    """
    Классические интервалы Вальда по обратной информации Фишера.

    Коэффициенты: β̂_j ± z·se_j, se_j = sqrt((A⁻¹)_jj).
    Предсказания: β̂·x ± z·sqrt(xᵀA⁻¹x) на шкале логита (дельта-метод).

    Args:
        fit: Сошедшаяся модель
        level: Уровень доверия
        names: Имена коэффициентов
        test_features: Необязательные тестовые точки

    Returns:
        InferenceReport с методом CLASSICAL
    """
    z = _check_level(level)
    se = standard_se(fit)
    names = _coefficient_names(fit.d, names)
    stats = fit.beta_hat / se
    p_values = _two_sided_p(stats)

    coefficients = tuple(
        CoefficientRecord(name=str(name), beta_hat=float(b), beta_debiased=float(b), se_corrected=float(s),
                          ci_lo=float(b - z * s), ci_hi=float(b + z * s), z=float(t), p_value=float(p))
        for name, b, s, t, p in zip(names, fit.beta_hat, se, stats, p_values)
    )

    predictions = ()
    if test_features is not None:
        rows = np.atleast_2d(np.asarray(test_features, dtype=float))
        logit_hat = rows @ fit.beta_hat
        half_width = z * np.sqrt(quadratic_forms(fit, rows))
        predictions = _prediction_records(logit_hat, logit_hat, half_width)

    return InferenceReport(coefficients=coefficients, predictions=predictions, method=InferenceMethod.CLASSICAL,
                           level=level)


def bootstrap_inference(data: Dataset, level: float, replicates: int = SIMULATION_DEFAULTS['bootstrap_b'],
                        seed: SeedLike = 0, fit: Optional[MleFit] = None,
                        test_features: Optional[np.ndarray] = None) -> Tuple[InferenceReport, int]:
    """
    Процентильный мультипликативный бутстреп с весами Пуассона(1).

    Реплики, на которых взвешенные данные разделимы или Ньютон не сошелся,
    отбрасываются и подсчитываются.

    Args:
        data: Обучающий набор
        level: Уровень доверия
        replicates: Число реплик B
        seed: Зерно весов
        fit: Готовая модель на полной выборке
        test_features: Тестовые точки

    Returns:
        Кортеж (InferenceReport с методом BOOTSTRAP, число отброшенных реплик)
    """
    _check_level(level)
    if replicates < 1:
        raise ValueError(f"Число бутстреп-реплик должно быть >= 1, получено {replicates}")
    if fit is None:
        fit = fit_mle(data)
    rng = make_rng(seed)

    draws = []
    dropped = 0
    for b in range(replicates):
        weights = rng.poisson(1.0, size=data.n).astype(float)
        try:
            draws.append(fit_mle(data, weights=weights, beta0=fit.beta_hat).beta_hat)
        except (SeparableData, SingularHessian, MaxIterExceeded) as e:
            dropped += 1
            logger.debug(f"Бутстреп-реплика {b} отброшена: {e}")
    if not draws:
        raise SeparableData(f"Все {replicates} бутстреп-реплик отброшены", {'dropped': dropped})
    if dropped:
        logger.info(f"Бутстреп: отброшено {dropped} из {replicates} реплик")

    draws = np.array(draws)
    quantiles = (0.5 - level / 2.0, 0.5 + level / 2.0)
    lo, hi = np.quantile(draws, quantiles, axis=0)
    spread = np.std(draws, axis=0)
    with np.errstate(divide='ignore', invalid='ignore'):
        stats = np.where(spread > 0, fit.beta_hat / spread, np.where(fit.beta_hat == 0, 0.0, np.inf))
    p_values = _two_sided_p(stats)

    coefficients = tuple(
        CoefficientRecord(name=str(name), beta_hat=float(b), beta_debiased=float(b), se_corrected=float(s),
                          ci_lo=float(a), ci_hi=float(c), z=float(t), p_value=float(p))
        for name, b, s, a, c, t, p in zip(data.names(), fit.beta_hat, spread, lo, hi, stats, p_values)
    )

    predictions = ()
    if test_features is not None:
        rows = np.atleast_2d(np.asarray(test_features, dtype=float))
        logit_draws = draws @ rows.T
        logit_lo, logit_center, logit_hi = np.quantile(logit_draws, (quantiles[0], 0.5, quantiles[1]), axis=0)
        logit_hat = rows @ fit.beta_hat
        # logit_debiased здесь - медиана бутстреп-логитов, а не поправленная оценка
        predictions = tuple(
            PredictionRecord(logit_hat=float(t), logit_debiased=float(m), logit_ci=(float(a), float(c)),
                             prob_hat=float(sigmoid(t)), prob_ci=(float(sigmoid(a)), float(sigmoid(c))))
            for t, m, a, c in zip(logit_hat, logit_center, logit_lo, logit_hi)
        )

    report = InferenceReport(coefficients=coefficients, predictions=predictions, method=InferenceMethod.BOOTSTRAP,
                             level=level)
    return report, dropped


def bh_procedure(p_values: Sequence[float], q: float) -> np.ndarray:
    """
    Процедура Бенджамини-Хохберга (step-up) на уровне q.

    Порядок при равных p-значениях определяется индексом. При q <= 0
    ничего не отбирается.

    Args:
        p_values: p-значения в [0, 1]
        q: Целевая доля ложных открытий

    Returns:
        Отсортированный массив индексов отобранных гипотез
    """
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-значения должны быть вектором значений из [0, 1]")
    if q > 1:
        raise ValueError(f"q должно быть не больше 1, получено {q}")
    m = p.shape[0]
    if m == 0 or q <= 0:
        return np.array([], dtype=int)

    order = np.argsort(p, kind='stable')
    thresholds = q * np.arange(1, m + 1) / m
    passing = np.flatnonzero(p[order] <= thresholds)
    if passing.size == 0:
        return np.array([], dtype=int)
    return np.sort(order[:passing[-1] + 1])


def corrected_pipeline(data: Dataset, level: float, covariance: str = 'identity',
                       test_features: Optional[np.ndarray] = None,
                       method: EstimatorMethod = EstimatorMethod.SLOE,
                       opts: Optional[SolverOptions] = None,
                       fit: Optional[MleFit] = None,
                       workers: Optional[int] = None) -> Tuple[MleFit, SignalStrength, CorrectionParams, InferenceReport]:
    """
    Полный конвейер: ОМП -> η̂² -> система состояния по η -> скорректированный отчет.

    Args:
        data: Обучающий набор
        level: Уровень доверия
        covariance: 'identity' или 'empirical'
        test_features: Тестовые точки (в той же шкале, что и data)
        method: SLOE или LOO_EXACT
        opts: Параметры решателя
        fit: Готовая модель (иначе подгоняется)
        workers: Число потоков для LOO_EXACT

    Returns:
        Кортеж (fit, signal, params, report)
    """
    _check_level(level)
    scaling = feature_scaling(covariance, data.features)
    if fit is None:
        fit = fit_mle(data)
    signal = estimate_signal_strength(fit, data, method, workers)
    params = solve_eta(data.kappa, float(np.sqrt(signal.eta_sq)), opts)
    report = coefficient_inference(fit, params, level, scaling, data.names(), test_features)
    logger.info(f"Коррекция при κ={data.kappa:.4f}: α̂={params.alpha:.4f}, σ̂★={params.sigma_star:.4f}, "
                f"γ̂²={params.gamma_sq:.4f}")
    return fit, signal, params, report


def to_raw_scale(report: InferenceReport, dataset: Dataset) -> InferenceReport:
    """
    Переводит интервалы коэффициентов в исходные единицы признаков.

    Коэффициент при стандартизованном признаке делится на масштаб
    столбца; Z и p-значения не меняются. Предсказания от шкалы не зависят.

    Args:
        report: Отчет на стандартизованной шкале
        dataset: Стандартизованный набор с сохраненными масштабами

    Returns:
        Новый InferenceReport со scale='raw'
    """
    if not dataset.standardized or dataset.column_scales is None:
        raise ValueError("Обратное преобразование требует стандартизованный набор данных")
    if len(report.coefficients) != dataset.d:
        raise ValueError("Число коэффициентов отчета не совпадает с размерностью набора данных")

    coefficients = tuple(
        replace(c, beta_hat=c.beta_hat / s, beta_debiased=c.beta_debiased / s, se_corrected=c.se_corrected / s,
                ci_lo=c.ci_lo / s, ci_hi=c.ci_hi / s)
        for c, s in zip(report.coefficients, dataset.column_scales)
    )
    return replace(report, coefficients=coefficients, scale='raw')
