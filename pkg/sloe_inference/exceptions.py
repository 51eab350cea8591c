# exceptions.py
from typing import Any, Dict, Optional


class SloeError(Exception):
    """
    Базовое исключение библиотеки.

    Attributes:
        diagnostics: Словарь с диагностикой (итерации, нормы невязок и т.п.)
    """

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# Ошибки данных (код выхода 2)

class DataError(SloeError):
    """Некорректные входные данные."""


class MissingFileError(DataError):
    pass


class NonBinaryOutcomeError(DataError):
    pass


class NonNumericCellError(DataError):
    pass


class ConstantColumnError(DataError):
    pass


class KappaMismatch(SloeError):
    """Параметры коррекции решены для другого κ, чем у модели."""


class ConfigError(SloeError):
    """Некорректная конфигурация эксперимента (код выхода 1)."""


# Численные ошибки (код выхода 3)

class NumericalError(SloeError):
    """Базовый класс численных отказов."""


class SeparableData(NumericalError):
    """Данные линейно разделимы, ОМП не существует."""


class SingularHessian(NumericalError):
    """Гессиан вырожден (неполный ранг матрицы признаков)."""


class MaxIterExceeded(NumericalError):
    """Метод Ньютона не сошелся за отведенное число итераций."""


class NotConverged(NumericalError):
    """Операция требует сошедшуюся модель."""


class SeparableSubproblem(NumericalError):
    """Подзадача без i-го наблюдения разделима."""

    def __init__(self, index: int, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(f"подвыборка без наблюдения {index} линейно разделима", diagnostics)
        self.index = index


class LeverageAtOne(NumericalError):
    """Рычаг наблюдения равен единице, одноранговое понижение вырождено."""

    def __init__(self, index: int, leverage: float):
        super().__init__(f"рычаг наблюдения {index} равен {leverage:.15f}",
                         {'index': index, 'leverage': leverage})
        self.index = index


class OutsideExistenceRegion(NumericalError):
    """(κ, γ) вне области существования ОМП."""


class NoConvergence(NumericalError):
    """Система уравнений состояния не решена."""


class InconsistentEta(NumericalError):
    """Нет решения с положительной неявной силой сигнала γ²."""


class AlreadySeparable(NumericalError):
    """Полная выборка уже разделима, зондирование границы невозможно."""


class FrontierOutOfRange(NumericalError):
    """Оценка κ★ вне диапазона таблицы границы."""
