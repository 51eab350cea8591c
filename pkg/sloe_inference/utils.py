# utils.py
from typing import Callable, Iterable, List, Sequence, TypeVar, Union
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

T = TypeVar('T')

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


def sigmoid(t):
    """Логистическая функция g(t) = 1 / (1 + e^{-t})."""
    return expit(t)


def sigmoid_derivative(t):
    """Производная g'(t) = g(t)(1 - g(t))."""
    p = expit(t)
    return p * (1.0 - p)


def log1pexp(t):
    """Устойчивое вычисление log(1 + e^t) (первообразная G логистической функции)."""
    return np.logaddexp(0.0, t)


def make_rng(seed: SeedLike) -> np.random.Generator:
    """
    Создает генератор PCG64 из числа или последовательности чисел.

    Все генераторы библиотеки используют numpy.random.default_rng, поэтому
    результаты побитово воспроизводимы на одной сборке.

    Args:
        seed: Целое число (64 бита без знака), последовательность целых или SeedSequence

    Returns:
        Генератор numpy
    """
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise ValueError("Зерно должно быть неотрицательным целым числом")
        return np.random.default_rng(int(seed))
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    entropy = [int(s) for s in seed]
    if any(s < 0 for s in entropy):
        raise ValueError("Компоненты зерна должны быть неотрицательными")
    return np.random.default_rng(entropy)


def run_concurrent_tasks(tasks: Iterable[Callable[[], T]], max_workers: int = 1) -> List[T]:
    """
    Запускает задачи параллельно с использованием ThreadPoolExecutor.

    Порядок результатов совпадает с порядком задач, поэтому агрегация
    не зависит от числа потоков.

    Args:
        tasks: Список функций без аргументов
        max_workers: Максимальное количество параллельных рабочих потоков

    Returns:
        Список результатов выполнения задач
    """
    tasks = list(tasks)
    if max_workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(task) for task in tasks]
        return [future.result() for future in futures]


def column_names_for(d: int) -> List[str]:
    """Имена признаков по умолчанию: x1, x2, ..."""
    return [f"x{j}" for j in range(1, d + 1)]
