# models.py
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class EstimatorMethod(str, Enum):
    SLOE = 'SLOE'
    LOO_EXACT = 'LOO_EXACT'
    PROBE_FRONTIER = 'PROBE_FRONTIER'


class InferenceMethod(str, Enum):
    CORRECTED = 'CORRECTED'
    CLASSICAL = 'CLASSICAL'
    BOOTSTRAP = 'BOOTSTRAP'


class FeatureFamily(str, Enum):
    GAUSSIAN = 'GAUSSIAN'
    GWAS = 'GWAS'


class FrontierProvenance(str, Enum):
    MONTE_CARLO = 'MONTE_CARLO'
    USER_SUPPLIED = 'USER_SUPPLIED'


@dataclass(frozen=True)
class Dataset:
    """
    Набор данных для логистической регрессии.

    Attributes:
        features: Матрица признаков n×d (только конечные значения)
        outcomes: Вектор откликов длины n со значениями 0/1
        standardized: Были ли столбцы центрированы и нормированы
        column_names: Имена признаков (d строк) или None
        column_means: Средние столбцов до стандартизации (только если standardized)
        column_scales: Стандартные отклонения столбцов до стандартизации
    """
    features: np.ndarray
    outcomes: np.ndarray
    standardized: bool = False
    column_names: Optional[Tuple[str, ...]] = None
    column_means: Optional[np.ndarray] = None
    column_scales: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        outcomes = np.asarray(self.outcomes, dtype=float).ravel()
        n, d = features.shape

        if n < 1 or d < 1:
            raise ValueError(f"Пустой набор данных: n={n}, d={d}")
        if outcomes.shape[0] != n:
            raise ValueError(f"Длина откликов {outcomes.shape[0]} не совпадает с числом строк {n}")
        if not np.all(np.isfinite(features)):
            raise ValueError("Матрица признаков содержит NaN или Inf")
        if not np.all((outcomes == 0.0) | (outcomes == 1.0)):
            raise ValueError("Отклики должны быть равны 0 или 1")
        if self.column_names is not None and len(self.column_names) != d:
            raise ValueError(f"Ожидалось {d} имен столбцов, получено {len(self.column_names)}")
        if self.standardized:
            means = features.mean(axis=0)
            variances = features.var(axis=0)
            if np.max(np.abs(means)) > 1e-8 or np.max(np.abs(variances - 1.0)) > 1e-6:
                raise ValueError("Флаг standardized установлен, но столбцы не стандартизованы")

        object.__setattr__(self, 'features', _frozen_array(features))
        object.__setattr__(self, 'outcomes', _frozen_array(outcomes))
        if self.column_names is not None:
            object.__setattr__(self, 'column_names', tuple(str(c) for c in self.column_names))
        if self.column_means is not None:
            object.__setattr__(self, 'column_means', _frozen_array(self.column_means))
        if self.column_scales is not None:
            object.__setattr__(self, 'column_scales', _frozen_array(self.column_scales))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def kappa(self) -> float:
        return self.d / self.n

    def names(self) -> List[str]:
        if self.column_names is not None:
            return list(self.column_names)
        return [f"x{j}" for j in range(1, self.d + 1)]

    def standardize_rows(self, rows: np.ndarray) -> np.ndarray:
        """
        Применяет к новым строкам ту же стандартизацию, что и к обучающим данным.

        Args:
            rows: Матрица k×d в исходных единицах

        Returns:
            Матрица k×d в стандартизованных единицах
        """
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if not self.standardized:
            return rows
        return (rows - self.column_means) / self.column_scales

    def subset(self, index: np.ndarray) -> 'Dataset':
        """Подвыборка строк; флаг стандартизации не переносится."""
        return Dataset(features=self.features[index], outcomes=self.outcomes[index],
                       column_names=self.column_names)


@dataclass(frozen=True)
class TruthSpec:
    """
    Истинные параметры симуляции.

    Attributes:
        beta: Вектор коэффициентов длины d
        gamma_sq: Сила сигнала γ² (дисперсия истинных логитов)
        mu: Истинные вероятности μ_i = g(β·x_i)
    """
    beta: np.ndarray
    gamma_sq: float
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'beta', _frozen_array(self.beta))
        object.__setattr__(self, 'mu', _frozen_array(self.mu))


@dataclass(frozen=True)
class MleFit:
    """
    Результат подгонки ОМП.

    hessian_chol хранит нижний треугольный множитель L матрицы
    A = Σ_j x_j g'(t_j) x_jᵀ (положительно определенная ориентация, A = -H).
    """
    beta_hat: np.ndarray
    logits: np.ndarray
    hessian_chol: Optional[np.ndarray]
    converged: bool
    iterations: int
    grad_norm: float
    separable: bool
    loglik: float = float('nan')
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'beta_hat', _frozen_array(self.beta_hat))
        object.__setattr__(self, 'logits', _frozen_array(self.logits))
        if self.hessian_chol is not None:
            object.__setattr__(self, 'hessian_chol', _frozen_array(self.hessian_chol))
        if self.separable and self.converged:
            raise ValueError("Разделимая модель не может считаться сошедшейся")
        if self.n == 0:
            object.__setattr__(self, 'n', int(self.logits.shape[0]))

    @property
    def d(self) -> int:
        return self.beta_hat.shape[0]

    @property
    def kappa(self) -> float:
        return self.d / self.n


@dataclass(frozen=True)
class SignalStrength:
    """
    Оценка искаженной силы сигнала η̂².

    Attributes:
        eta_sq: Оценка η̂² (дисперсия LOO-логитов)
        method: Метод оценки
        loo_logits: Вектор S_i (если есть)
        diagnostics: Метаданные метода (для PROBE_FRONTIER содержит gamma_hat)
    """
    eta_sq: float
    method: EstimatorMethod
    loo_logits: Optional[np.ndarray] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.eta_sq >= 0:
            raise ValueError(f"η² должно быть неотрицательным, получено {self.eta_sq}")
        if self.loo_logits is not None:
            object.__setattr__(self, 'loo_logits', _frozen_array(self.loo_logits))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'eta_sq': float(self.eta_sq),
            'method': self.method.value,
            'diagnostics': {k: _jsonable(v) for k, v in self.diagnostics.items()},
        }


@dataclass(frozen=True)
class BivariateGaussianSpec:
    """Центрированное двумерное нормальное распределение (Q₁, Q₂)."""
    var1: float
    var2: float
    cov: float

    def __post_init__(self):
        if self.var1 < 0 or self.var2 < 0:
            raise ValueError(f"Отрицательная дисперсия: var1={self.var1}, var2={self.var2}")
        if self.cov ** 2 > self.var1 * self.var2 * (1.0 + 1e-10) + 1e-300:
            raise ValueError(
                f"Ковариационная матрица не положительно полуопределена: cov²={self.cov ** 2}, "
                f"var1·var2={self.var1 * self.var2}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.var1, self.cov], [self.cov, self.var2]])


@dataclass(frozen=True)
class CorrectionParams:
    """
    Решение системы уравнений состояния.

    Attributes:
        alpha: Инфляция смещения α
        sigma_star: Масштаб асимптотического стандартного отклонения σ★
        lambda_: Масштаб собственных чисел обратного гессиана λ
        kappa: Отношение d/n
        gamma_sq: Неявная сила сигнала γ²
        eta_sq: Неявная искаженная сила сигнала η² = α²γ² + κσ★²
        residual_norm: Max-норма невязок трех уравнений
        iterations: Число вычислений невязок
        residuals: Невязки трех уравнений
        order: Порядок квадратуры
        mode: 'gamma', 'eta' или 'null' (какой параметр был задан; 'null' - решение при γ = 0)
    """
    alpha: float
    sigma_star: float
    lambda_: float
    kappa: float
    gamma_sq: float
    eta_sq: float
    residual_norm: float
    iterations: int
    residuals: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    order: int = 60
    mode: str = 'gamma'

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['lambda'] = data.pop('lambda_')
        data['residuals'] = [float(r) for r in self.residuals]
        return data


@dataclass(frozen=True)
class CoefficientRecord:
    name: str
    beta_hat: float
    beta_debiased: float
    se_corrected: float
    ci_lo: float
    ci_hi: float
    z: float
    p_value: float


@dataclass(frozen=True)
class PredictionRecord:
    logit_hat: float
    logit_debiased: float
    logit_ci: Tuple[float, float]
    prob_hat: float
    prob_ci: Tuple[float, float]


@dataclass(frozen=True)
class InferenceReport:
    """
    Отчет об интервалах и p-значениях.

    Attributes:
        coefficients: Записи по коэффициентам
        predictions: Записи по тестовым точкам
        method: CORRECTED, CLASSICAL или BOOTSTRAP
        level: Уровень доверия 1-δ
        params: Параметры коррекции (только для CORRECTED)
        covariance: 'identity' или 'empirical'
        scale: 'standardized' или 'raw'
    """
    coefficients: Tuple[CoefficientRecord, ...]
    predictions: Tuple[PredictionRecord, ...]
    method: InferenceMethod
    level: float
    params: Optional[CorrectionParams] = None
    covariance: str = 'identity'
    scale: str = 'standardized'

    def p_values(self) -> np.ndarray:
        return np.array([c.p_value for c in self.coefficients])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method.value,
            'level': self.level,
            'covariance': self.covariance,
            'scale': self.scale,
            'params': self.params.to_dict() if self.params is not None else None,
            'coefficients': [_jsonable(asdict(c)) for c in self.coefficients],
            'predictions': [_jsonable(asdict(p)) for p in self.predictions],
        }


@dataclass(frozen=True)
class FrontierTable:
    """
    Табулированная граница разделимости κ★(γ).

    Attributes:
        gamma: Возрастающая сетка γ
        kappa_star: Строго убывающие значения κ★
        provenance: Источник таблицы
        n_sim: Размер симулированных выборок
        reps: Повторов на точку бисекции
        seed: Зерно построения
        version: Версия формата
    """
    gamma: np.ndarray
    kappa_star: np.ndarray
    provenance: FrontierProvenance = FrontierProvenance.MONTE_CARLO
    n_sim: int = 0
    reps: int = 0
    seed: int = 0
    version: int = 1

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        kappa_star = np.asarray(self.kappa_star, dtype=float)
        if gamma.shape != kappa_star.shape or gamma.ndim != 1 or gamma.size < 2:
            raise ValueError("Таблица границы должна содержать не менее двух строк")
        if np.any(np.diff(gamma) <= 0):
            raise ValueError("Сетка γ должна строго возрастать")
        if np.any(np.diff(kappa_star) >= 0):
            raise ValueError("κ★ должна строго убывать по γ")
        object.__setattr__(self, 'gamma', _frozen_array(gamma))
        object.__setattr__(self, 'kappa_star', _frozen_array(kappa_star))

    def kappa_star_at(self, gamma: float) -> float:
        """Линейная интерполяция κ★(γ); ниже сетки возвращает первую строку."""
        return float(np.interp(gamma, self.gamma, self.kappa_star))

    def gamma_at(self, kappa_star: float) -> float:
        """Обращение κ★(γ) линейной интерполяцией."""
        return float(np.interp(kappa_star, self.kappa_star[::-1], self.gamma[::-1]))


@dataclass
class ExperimentConfig:
    """
    Конфигурация эксперимента Монте-Карло.

    Attributes:
        experiment: coverage, null_pvalues, sloe_convergence, runtime, bootstrap, fdr
        n: Размер обучающей выборки
        n_grid: Сетка n (для sloe_convergence и runtime)
        kappa_grid: Сетка κ
        gamma_sq_grid: Сетка γ²
        feature_family: GAUSSIAN или GWAS
        reps: Число повторов на точку сетки
        level: Уровень доверия
        methods: Подмножество {CLASSICAL, CORRECTED, BOOTSTRAP}
        seed: Базовое зерно
        parallelism: Число рабочих потоков
    """
    experiment: str = 'coverage'
    n: int = 1000
    n_grid: List[int] = field(default_factory=list)
    kappa_grid: List[float] = field(default_factory=lambda: [0.1])
    gamma_sq_grid: List[float] = field(default_factory=lambda: [1.0])
    feature_family: FeatureFamily = FeatureFamily.GAUSSIAN
    reps: int = 10
    level: float = 0.9
    methods: List[InferenceMethod] = field(
        default_factory=lambda: [InferenceMethod.CLASSICAL, InferenceMethod.CORRECTED])
    seed: int = 0
    parallelism: int = 1
    test_size: Optional[int] = None
    bootstrap_b: int = 200
    q_grid: List[float] = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    covariance: str = 'identity'
    keep_raw: bool = False
    frontier_path: Optional[str] = None

    def grid_sizes(self) -> List[int]:
        return list(self.n_grid) if self.n_grid else [self.n]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['feature_family'] = self.feature_family.value
        data['methods'] = [m.value for m in self.methods]
        return data


@dataclass
class ExperimentResult:
    """
    Результат эксперимента.

    Attributes:
        experiment: Тип эксперимента
        config: Полная разрешенная конфигурация
        records: Строки по точкам сетки и методам (tidy-формат)
        raw: Сырые строки по повторам (если keep_raw)
        extras: Дополнительные данные (p-значения, кривые)
    """
    experiment: str
    config: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    raw: List[Dict[str, Any]] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'experiment': self.experiment,
            'config': _jsonable(self.config),
            'records': _jsonable(self.records),
            'raw': _jsonable(self.raw),
            'extras': _jsonable(self.extras),
        }


def _jsonable(value: Any) -> Any:
    """Рекурсивно приводит numpy-типы и перечисления к JSON-совместимым."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value
