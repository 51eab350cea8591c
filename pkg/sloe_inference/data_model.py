# data_model.py
import logging
import os
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from exceptions import (
    ConstantColumnError,
    DataError,
    MissingFileError,
    NonBinaryOutcomeError,
    NonNumericCellError,
)
from models import Dataset, FeatureFamily, TruthSpec
from utils import SeedLike, column_names_for, make_rng, sigmoid

# Настройка логирования
logger = logging.getLogger(__name__)

# Диапазон частот аллелей для признаков GWAS по умолчанию
GWAS_P_RANGE = (0.25, 0.75)

# Постоянный столбец: стандартное отклонение ниже этого порога
CONSTANT_COLUMN_EPS = 1e-12


def load_csv(path: str, outcome_column: str, standardize: bool = False) -> Dataset:
    """
    Загружает набор данных из CSV-файла.

    Файл в UTF-8, разделитель - запятая, первая строка - заголовок.
    Столбец отклика указывается по имени, все остальные столбцы
    становятся признаками. Пропуски не допускаются.

    Args:
        path: Путь к CSV-файлу
        outcome_column: Имя столбца отклика (значения 0/1)
        standardize: Центрировать и нормировать признаки

    Returns:
        Dataset
    """
    if not os.path.exists(path):
        raise MissingFileError(f"Файл не найден: {path}")

    try:
        frame = pd.read_csv(path, sep=',', encoding='utf-8', dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Не удалось прочитать CSV {path}: {e}") from e

    if outcome_column not in frame.columns:
        raise DataError(f"В файле {path} нет столбца отклика '{outcome_column}'")
    if frame.shape[1] < 2:
        raise DataError(f"В файле {path} нет столбцов признаков")
    if frame.shape[0] < 1:
        raise DataError(f"В файле {path} нет строк данных")

    numeric = {}
    for column in frame.columns:
        raw = frame[column].str.strip()
        missing = raw == ''
        if missing.any():
            row = int(np.flatnonzero(missing.to_numpy())[0]) + 1
            raise DataError(f"Пропущенное значение в столбце '{column}', строка {row}")

        values = pd.to_numeric(raw, errors='coerce')
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            if column == outcome_column:
                raise NonBinaryOutcomeError(
                    f"Недопустимое значение отклика '{raw.iloc[row - 1]}' в строке {row}")
            raise NonNumericCellError(
                f"Нечисловое значение '{raw.iloc[row - 1]}' в столбце '{column}', строка {row}")
        numeric[column] = values.to_numpy(dtype=float)

    outcomes = numeric.pop(outcome_column)
    invalid = ~np.isin(outcomes, (0.0, 1.0))
    if invalid.any():
        row = int(np.flatnonzero(invalid)[0]) + 1
        raise NonBinaryOutcomeError(f"Отклик должен быть 0 или 1, в строке {row} значение {outcomes[row - 1]:g}")

    column_names = list(numeric.keys())
    features = np.column_stack([numeric[c] for c in column_names])
    dataset = Dataset(features=features, outcomes=outcomes, column_names=tuple(column_names))
    logger.info(f"Загружен набор данных {path}: n={dataset.n}, d={dataset.d}, κ={dataset.kappa:.4f}")

    if standardize:
        dataset = standardize_dataset(dataset)
    return dataset


def load_feature_rows(path: str, column_names: Sequence[str], outcome_column: Optional[str] = None) -> np.ndarray:
    """
    Загружает тестовые точки из CSV с теми же столбцами признаков, что и обучающий набор.

    Столбец отклика, если он есть, игнорируется.

    Args:
        path: Путь к CSV-файлу
        column_names: Имена признаков обучающего набора (порядок задает столбцы)
        outcome_column: Имя столбца отклика

    Returns:
        Матрица k×d
    """
    if not os.path.exists(path):
        raise MissingFileError(f"Файл не найден: {path}")
    try:
        frame = pd.read_csv(path, sep=',', encoding='utf-8', dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Не удалось прочитать CSV {path}: {e}") from e

    if outcome_column is not None and outcome_column in frame.columns:
        frame = frame.drop(columns=[outcome_column])
    missing = [c for c in column_names if c not in frame.columns]
    if missing:
        raise DataError(f"В файле {path} нет столбцов признаков: {', '.join(missing)}")

    values = frame[list(column_names)].apply(lambda col: pd.to_numeric(col.str.strip(), errors='coerce'))
    matrix = values.to_numpy(dtype=float, na_value=np.nan)
    bad = ~np.isfinite(matrix)
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raise NonNumericCellError(f"Нечисловое значение в столбце '{column_names[col]}', строка {row + 1}")
    logger.info(f"Загружено {matrix.shape[0]} тестовых точек из {path}")
    return matrix


def standardize_dataset(dataset: Dataset) -> Dataset:
    """
    Центрирует столбцы и нормирует их к единичной (выборочной, деление на n) дисперсии.

    Args:
        dataset: Исходный набор данных

    Returns:
        Новый Dataset с standardized=True и сохраненными средними и масштабами
    """
    features = dataset.features
    means = features.mean(axis=0)
    scales = features.std(axis=0)
    constant = np.flatnonzero(scales <= CONSTANT_COLUMN_EPS * np.maximum(1.0, np.abs(means)))
    if constant.size:
        names = dataset.names()
        raise ConstantColumnError(
            f"Постоянные столбцы нельзя стандартизовать: {', '.join(names[j] for j in constant)}")

    standardized = (features - means) / scales
    # Повторная стандартизация сохраняет исходные масштабы
    if dataset.standardized:
        means = dataset.column_means + dataset.column_scales * means
        scales = dataset.column_scales * scales

    return Dataset(features=standardized, outcomes=dataset.outcomes, standardized=True,
                   column_names=dataset.column_names, column_means=means, column_scales=scales)


def gen_gaussian(n: int, d: int, seed: SeedLike) -> np.ndarray:
    """
    Генерирует матрицу n×d из независимых стандартных нормальных величин.

    Args:
        n: Число строк
        d: Число столбцов
        seed: Зерно генератора

    Returns:
        Матрица признаков
    """
    _check_sizes(n, d)
    return make_rng(seed).standard_normal((n, d))


def allele_frequencies(d: int, p_range: Tuple[float, float] = GWAS_P_RANGE) -> np.ndarray:
    """Частоты аллелей p_j, равномерно расставленные на отрезке p_range."""
    lo, hi = p_range
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError(f"Диапазон частот должен удовлетворять 0 < lo <= hi < 1, получено {p_range}")
    return np.linspace(lo, hi, d)


def gen_gwas(n: int, d: int, p_range: Tuple[float, float] = GWAS_P_RANGE, seed: SeedLike = 0,
             standardize: bool = True) -> np.ndarray:
    """
    Генерирует генотипоподобные признаки в равновесии Харди-Вайнберга.

    X_ij ∈ {0, 1, 2} с вероятностями (1-p_j)², 2p_j(1-p_j), p_j².
    Стандартизация использует точные моменты: среднее 2p_j, дисперсия 2p_j(1-p_j).

    Args:
        n: Число строк
        d: Число столбцов
        p_range: Диапазон частот аллелей
        seed: Зерно генератора
        standardize: Стандартизовать столбцы точными моментами

    Returns:
        Матрица признаков n×d
    """
    _check_sizes(n, d)
    p = allele_frequencies(d, p_range)
    genotypes = make_rng(seed).binomial(2, p, size=(n, d)).astype(float)
    if not standardize:
        return genotypes
    return (genotypes - 2.0 * p) / np.sqrt(2.0 * p * (1.0 - p))


def gen_features(family: FeatureFamily, n: int, d: int, seed: SeedLike) -> np.ndarray:
    """Признаки выбранного семейства."""
    if family == FeatureFamily.GAUSSIAN:
        return gen_gaussian(n, d, seed)
    if family == FeatureFamily.GWAS:
        return gen_gwas(n, d, GWAS_P_RANGE, seed)
    raise ValueError(f"Неизвестное семейство признаков: {family}")


def make_beta(d: int, gamma: float) -> np.ndarray:
    """
    Строит вектор коэффициентов с силой сигнала γ².

    β_j = 2γ/√d при j <= d/8, -2γ/√d при d/8 < j <= d/4, иначе 0.
    Если d не делится на 8, границы блоков округляются вниз.

    Args:
        d: Размерность
        gamma: Корень из силы сигнала (γ >= 0)

    Returns:
        Вектор длины d
    """
    if d < 1:
        raise ValueError(f"Размерность должна быть положительной, получено {d}")
    if gamma < 0:
        raise ValueError(f"γ должно быть неотрицательным, получено {gamma}")
    beta = np.zeros(d)
    first, second = d // 8, d // 4
    value = 2.0 * gamma / np.sqrt(d)
    beta[:first] = value
    beta[first:second] = -value
    return beta


def gen_outcomes(features: np.ndarray, beta: np.ndarray, seed: SeedLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Генерирует отклики логистической модели.

    Args:
        features: Матрица n×d
        beta: Вектор коэффициентов длины d
        seed: Зерно генератора

    Returns:
        Кортеж (Y, μ), где μ_i = g(x_i·β), Y_i ~ Bernoulli(μ_i)
    """
    features = np.atleast_2d(features)
    beta = np.asarray(beta, dtype=float)
    if features.shape[1] != beta.shape[0]:
        raise ValueError(f"Размерности не совпадают: {features.shape[1]} признаков и {beta.shape[0]} коэффициентов")
    # g(t) при |t| > 36 округляется до 0 или 1 в float64
    logits = np.clip(features @ beta, -36.0, 36.0)
    mu = sigmoid(logits)
    outcomes = (make_rng(seed).random(features.shape[0]) < mu).astype(float)
    return outcomes, mu


def simulate_dataset(family: FeatureFamily, n: int, d: int, gamma_sq: float,
                     seed: SeedLike, beta: Optional[np.ndarray] = None) -> Tuple[Dataset, TruthSpec]:
    """
    Симулирует обучающий набор данных с известной истиной.

    Признаки и отклики используют независимые потоки, производные от seed.

    Args:
        family: Семейство признаков
        n: Размер выборки
        d: Размерность
        gamma_sq: Сила сигнала γ²
        seed: Базовое зерно (число или последовательность)
        beta: Готовый вектор коэффициентов (по умолчанию make_beta)

    Returns:
        Кортеж (Dataset, TruthSpec)
    """
    base = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    if beta is None:
        beta = make_beta(d, float(np.sqrt(gamma_sq)))
    features = gen_features(family, n, d, base + [0])
    outcomes, mu = gen_outcomes(features, beta, base + [1])
    dataset = Dataset(features=features, outcomes=outcomes, column_names=tuple(column_names_for(d)))
    return dataset, TruthSpec(beta=beta, gamma_sq=float(beta @ beta), mu=mu)


def _check_sizes(n: int, d: int) -> None:
    if n < 1 or d < 1:
        raise ValueError(f"Размеры должны быть положительными: n={n}, d={d}")
