# state_evolution.py
"""
Решение системы трех нелинейных уравнений состояния для (α, σ★, λ).

Система при (Q₁, Q₂) ~ N(0, Σ):

    κ²σ★²  = E[2 g(Q₁) (λ g(prox_{λG}(Q₂)))²]
    0      = E[g(Q₁) Q₁ λ g(prox_{λG}(Q₂))]
    1 - κ  = E[2 g(Q₁) / (1 + λ g'(prox_{λG}(Q₂)))]

В параметризации через γ: Σ = [[γ², -αγ²], [-αγ², α²γ² + κσ★²]].
В параметризации через η подставляется γ² = (η² - κσ★²)/α², что дает
Σ = [[(η² - κσ★²)/α², -(η² - κσ★²)/α], [-(η² - κσ★²)/α, η²]].

Ожидания считаются тензорной квадратурой Гаусса-Эрмита после разложения
Холецкого ковариации; неизвестные ищутся в логарифмах, что гарантирует
положительность.
"""
import logging
import math
import threading
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import root

from config import CACHE_DIR, SOLVER_CONFIG
from exceptions import InconsistentEta, NoConvergence, OutsideExistenceRegion
from models import BivariateGaussianSpec, CorrectionParams, FrontierTable
from utils import sigmoid, sigmoid_derivative

# Настройка логирования
logger = logging.getLogger(__name__)

CACHE_FILE = "state_evolution_cache.csv"
CACHE_VERSION = 1
_cache_lock = threading.Lock()

# Ограничение логарифмов неизвестных, чтобы exp не переполнялся
_LOG_BOUND = 30.0
# Штраф для точек вне допустимой области (γ² <= 0 в режиме η)
_PENALTY = 1e3
# При η² ближе к нулевой границе поиск стартует от решения при γ = 0
_NEAR_NULL_RATIO = 1.5


@dataclass(frozen=True)
class SolverOptions:
    """
    Параметры решателя.

    Attributes:
        order: Узлов Гаусса-Эрмита на ось
        tol: Допуск на max-норму невязок
        prox_tol: Допуск внутреннего решения для prox
        max_iter: Максимум вычислений невязок на одну попытку
        continuation_steps: Шагов продолжения по κ в запасном режиме
        check_existence: Проверять область существования по таблице границы
        frontier: Таблица границы (по умолчанию загружается или строится)
        existence_margin: Относительный запас до границы
        use_cache: Использовать дисковый кэш решений
    """
    order: int = SOLVER_CONFIG['order']
    tol: float = SOLVER_CONFIG['tol']
    prox_tol: float = SOLVER_CONFIG['prox_tol']
    max_iter: int = SOLVER_CONFIG['max_iter']
    continuation_steps: int = SOLVER_CONFIG['continuation_steps']
    check_existence: bool = True
    frontier: Optional[FrontierTable] = None
    existence_margin: float = SOLVER_CONFIG['existence_margin']
    use_cache: bool = False


def prox_logistic(lam: float, s, tol: float = SOLVER_CONFIG['prox_tol'],
                  max_iter: int = SOLVER_CONFIG['prox_max_iter']):
    """
    Проксимальный оператор prox_{λG}(s) = argmin_t λG(t) + (s - t)²/2.

    Решает λg(t) + t = s защищенным методом Ньютона внутри скобки
    (s - λ, s); функция t + λg(t) строго возрастает, поэтому корень единственен.

    Args:
        lam: λ >= 0
        s: Число или массив
        tol: Допуск |λg(t) + t - s|
        max_iter: Максимум итераций

    Returns:
        t той же формы, что s
    """
    if lam < 0:
        raise ValueError(f"λ должно быть неотрицательным, получено {lam}")
    s_arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s_arr)):
        raise ValueError("Аргумент prox должен быть конечным")
    if lam == 0:
        return s_arr.copy() if s_arr.ndim else float(s_arr)

    lo = s_arr - lam
    hi = s_arr.copy()
    t = s_arr - lam * sigmoid(s_arr)

    for _ in range(max_iter):
        excess = t + lam * sigmoid(t) - s_arr
        if np.all(np.abs(excess) <= tol):
            break
        hi = np.where(excess > 0, t, hi)
        lo = np.where(excess < 0, t, lo)
        newton = t - excess / (1.0 + lam * sigmoid_derivative(t))
        inside = (newton > lo) & (newton < hi)
        t = np.where(inside, newton, 0.5 * (lo + hi))

    return t if t.ndim else float(t)


@lru_cache(maxsize=16)
def _hermite_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Узлы и веса для E[f(Z)], Z ~ N(0, 1)."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gaussian_grid(spec: BivariateGaussianSpec, order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Узлы (q₁, q₂) и веса квадратуры для центрированного двумерного нормального закона.

    Вырожденная (ранга 1) ковариация обрабатывается одномерным правилом
    вдоль направления носителя.

    Args:
        spec: Ковариация
        order: Узлов на ось

    Returns:
        Кортеж (q1, q2, weights) одномерных массивов
    """
    if order < 2:
        raise ValueError(f"Порядок квадратуры должен быть >= 2, получено {order}")
    nodes, weights = _hermite_rule(order)
    scale = max(spec.var1, spec.var2, 1e-300)

    if spec.var1 <= 1e-14 * scale:
        return np.zeros_like(nodes), math.sqrt(spec.var2) * nodes, weights

    l11 = math.sqrt(spec.var1)
    l21 = spec.cov / l11
    l22_sq = spec.var2 - l21 * l21
    if l22_sq <= 1e-14 * scale:
        return l11 * nodes, l21 * nodes, weights

    z1, z2 = np.meshgrid(nodes, nodes, indexing='ij')
    w = np.outer(weights, weights).ravel()
    q1 = (l11 * z1).ravel()
    q2 = (l21 * z1 + math.sqrt(l22_sq) * z2).ravel()
    return q1, q2, w


def expect_bivariate(f: Callable[[np.ndarray, np.ndarray], np.ndarray], spec: BivariateGaussianSpec,
                     order: int = SOLVER_CONFIG['order']) -> float:
    """
    Вычисляет E[f(Q₁, Q₂)] квадратурой Гаусса-Эрмита.

    Args:
        f: Векторизованная функция двух массивов
        spec: Ковариация (Q₁, Q₂)
        order: Узлов на ось

    Returns:
        Приближение ожидания
    """
    q1, q2, weights = gaussian_grid(spec, order)
    return float(np.sum(weights * f(q1, q2)))


def gamma_covariance(alpha: float, sigma_star: float, kappa: float, gamma_sq: float) -> BivariateGaussianSpec:
    """Ковариация (Q₁, Q₂) в параметризации через γ²."""
    return BivariateGaussianSpec(var1=gamma_sq, var2=alpha ** 2 * gamma_sq + kappa * sigma_star ** 2,
                                 cov=-alpha * gamma_sq)


def eta_covariance(alpha: float, sigma_star: float, kappa: float, eta_sq: float) -> BivariateGaussianSpec:
    """Ковариация (Q₁, Q₂) в параметризации через η² (подстановка γ² = (η² - κσ★²)/α²)."""
    signal = eta_sq - kappa * sigma_star ** 2
    return BivariateGaussianSpec(var1=signal / alpha ** 2, var2=eta_sq, cov=-signal / alpha)


def system_residuals(alpha: float, sigma_star: float, lam: float, kappa: float,
                     spec: BivariateGaussianSpec, order: int = SOLVER_CONFIG['order'],
                     prox_tol: float = SOLVER_CONFIG['prox_tol']) -> np.ndarray:
    """
    Невязки трех уравнений состояния (правая часть минус левая).

    Args:
        alpha, sigma_star, lam: Кандидаты неизвестных
        kappa: Отношение d/n
        spec: Ковариация (Q₁, Q₂)
        order: Порядок квадратуры
        prox_tol: Допуск prox

    Returns:
        Массив из трех невязок
    """
    q1, q2, weights = gaussian_grid(spec, order)
    prox = prox_logistic(lam, q2, tol=prox_tol)
    g_q1 = sigmoid(q1)
    g_prox = sigmoid(prox)

    variance_eq = np.sum(weights * 2.0 * g_q1 * (lam * g_prox) ** 2) - kappa ** 2 * sigma_star ** 2
    bias_eq = np.sum(weights * g_q1 * q1 * lam * g_prox)
    hessian_eq = np.sum(weights * 2.0 * g_q1 / (1.0 + lam * sigmoid_derivative(prox))) - (1.0 - kappa)
    return np.array([variance_eq, bias_eq, hessian_eq])


def _initial_guess(kappa: float, gamma_sq: float) -> np.ndarray:
    # Значения классического предела κ -> 0: σ★² ≈ 1/E[g'(Q)], λ ≈ κσ★²
    sigma_sq = 4.0 * math.sqrt(1.0 + math.pi * gamma_sq / 8.0) / (1.0 - kappa)
    return np.log([1.0 + kappa, math.sqrt(sigma_sq), kappa * sigma_sq])


def _covariance_for(mode: str, alpha: float, sigma_star: float, kappa: float, target_sq: float):
    if mode == 'gamma':
        return gamma_covariance(alpha, sigma_star, kappa, target_sq)
    return eta_covariance(alpha, sigma_star, kappa, target_sq)


def _scaled_residual_function(mode: str, kappa: float, target_sq: float, opts: SolverOptions):
    # Масштабирование уравнений выравнивает порядки величин при малых κ и λ
    def residual(log_params: np.ndarray) -> np.ndarray:
        alpha, sigma_star, lam = np.exp(np.clip(log_params, -_LOG_BOUND, _LOG_BOUND))
        if mode == 'eta' and target_sq - kappa * sigma_star ** 2 <= 0:
            return np.full(3, _PENALTY * (1.0 + kappa * sigma_star ** 2 - target_sq))
        try:
            spec = _covariance_for(mode, alpha, sigma_star, kappa, target_sq)
        except ValueError:
            return np.full(3, _PENALTY)
        r = system_residuals(alpha, sigma_star, lam, kappa, spec, opts.order, opts.prox_tol)
        return np.array([r[0] / kappa ** 2, r[1] / lam, r[2] / kappa])
    return residual


def _attempt(mode: str, kappa: float, target_sq: float, x0: np.ndarray, opts: SolverOptions,
             method: str) -> Tuple[Optional[np.ndarray], int]:
    function = _scaled_residual_function(mode, kappa, target_sq, opts)
    if method == 'hybr':
        options = {'xtol': 1e-13, 'maxfev': opts.max_iter}
    else:
        options = {'xtol': 1e-14, 'ftol': 1e-14, 'maxiter': opts.max_iter}
    try:
        result = root(function, x0, method=method, options=options)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        logger.debug(f"Метод {method} завершился ошибкой: {e}")
        return None, 0
    evaluations = int(getattr(result, 'nfev', 0) or 0)
    if not np.all(np.isfinite(result.x)):
        return None, evaluations
    return np.array(result.x), evaluations


def _finalize(mode: str, kappa: float, target_sq: float, log_params: np.ndarray, opts: SolverOptions,
              evaluations: int) -> Optional[CorrectionParams]:
    alpha, sigma_star, lam = (float(v) for v in np.exp(log_params))
    if mode == 'gamma':
        gamma_sq = target_sq
        eta_sq = alpha ** 2 * gamma_sq + kappa * sigma_star ** 2
    else:
        eta_sq = target_sq
        gamma_sq = (eta_sq - kappa * sigma_star ** 2) / alpha ** 2
        if gamma_sq <= 0:
            return None
    try:
        spec = _covariance_for(mode, alpha, sigma_star, kappa, target_sq)
    except ValueError:
        return None
    residuals = system_residuals(alpha, sigma_star, lam, kappa, spec, opts.order, opts.prox_tol)
    residual_norm = float(np.max(np.abs(residuals)))
    if not np.isfinite(residual_norm) or residual_norm > opts.tol:
        return None
    return CorrectionParams(alpha=alpha, sigma_star=sigma_star, lambda_=lam, kappa=kappa,
                            gamma_sq=float(gamma_sq), eta_sq=float(eta_sq), residual_norm=residual_norm,
                            iterations=evaluations, residuals=tuple(float(r) for r in residuals),
                            order=opts.order, mode=mode)


def _solve_system(mode: str, kappa: float, target_sq: float, opts: SolverOptions,
                  start: Optional[np.ndarray] = None) -> CorrectionParams:
    """Прямой корень, затем Левенберг-Марквардт, затем продолжение по κ."""
    if start is not None:
        x0 = start
    elif mode == 'gamma':
        x0 = _initial_guess(kappa, target_sq)
    else:
        gamma_guess = target_sq
        for _ in range(2):
            alpha0, sigma0, _lam0 = np.exp(_initial_guess(kappa, gamma_guess))
            gamma_guess = max(target_sq - kappa * sigma0 ** 2, 0.05 * target_sq) / alpha0 ** 2
        x0 = _initial_guess(kappa, gamma_guess)

    total_evaluations = 0
    for method in ('hybr', 'lm'):
        solution, evaluations = _attempt(mode, kappa, target_sq, x0, opts, method)
        total_evaluations += evaluations
        if solution is not None:
            params = _finalize(mode, kappa, target_sq, solution, opts, total_evaluations)
            if params is not None:
                return params
        logger.debug(f"Метод {method} не решил систему при κ={kappa}, {mode}²={target_sq}")

    logger.warning(f"Прямое решение не найдено при κ={kappa:.4f}, {mode}²={target_sq:.4f}; продолжение по κ")
    start = min(0.01, kappa / 2.0)
    ramp = np.geomspace(start, kappa, opts.continuation_steps)
    x = _initial_guess(start, target_sq if mode == 'gamma' else target_sq / (1.0 + start) ** 2)
    for step_kappa in ramp:
        solution, evaluations = _attempt(mode, float(step_kappa), target_sq, x, opts, 'hybr')
        total_evaluations += evaluations
        if solution is None:
            break
        x = solution

    params = _finalize(mode, kappa, target_sq, x, opts, total_evaluations)
    if params is not None:
        return params

    alpha, sigma_star, lam = np.exp(x)
    diagnostics = {'kappa': kappa, 'mode': mode, 'target_sq': target_sq, 'last_alpha': float(alpha),
                   'last_sigma_star': float(sigma_star), 'last_lambda': float(lam),
                   'evaluations': total_evaluations}
    if mode == 'eta' and target_sq - kappa * sigma_star ** 2 <= 0:
        raise InconsistentEta(
            f"Нет решения с положительной γ² при κ={kappa}, η²={target_sq}", diagnostics)
    raise NoConvergence(f"Система уравнений состояния не решена при κ={kappa}, {mode}²={target_sq}",
                        diagnostics)


def _resolve_frontier(opts: SolverOptions) -> FrontierTable:
    if opts.frontier is not None:
        return opts.frontier
    # Отложенный импорт: probe_frontier сам зависит от этого модуля
    from probe_frontier import default_frontier
    return default_frontier()


def check_existence(kappa: float, gamma: float, opts: SolverOptions) -> None:
    """
    Проверяет, что (κ, γ) лежит внутри области существования ОМП с запасом.

    Args:
        kappa: Отношение d/n
        gamma: Корень из силы сигнала
        opts: Параметры решателя (таблица границы и запас)
    """
    table = _resolve_frontier(opts)
    kappa_star = table.kappa_star_at(gamma)
    if gamma > table.gamma[-1]:
        logger.warning(f"γ={gamma:.3f} выше сетки таблицы границы ({table.gamma[-1]:.3f}); "
                       f"проверка существования приближенная")
    limit = (1.0 - opts.existence_margin) * kappa_star
    if kappa >= limit:
        raise OutsideExistenceRegion(
            f"(κ={kappa:.4f}, γ={gamma:.4f}) вне области существования ОМП (κ★={kappa_star:.4f})",
            {'kappa': kappa, 'gamma': gamma, 'kappa_star': kappa_star, 'limit': limit})


def _validate_kappa(kappa: float) -> None:
    if not (0.0 < kappa < 1.0):
        raise ValueError(f"κ должно лежать в (0, 1), получено {kappa}")


def solve_gamma(kappa: float, gamma: float, opts: Optional[SolverOptions] = None) -> CorrectionParams:
    """
    Решает систему состояния при заданных (κ, γ).

    Args:
        kappa: Отношение d/n в (0, 1)
        gamma: Корень из силы сигнала γ > 0
        opts: Параметры решателя

    Returns:
        CorrectionParams
    """
    opts = opts or SolverOptions()
    _validate_kappa(kappa)
    if not gamma > 0:
        raise ValueError(f"γ должно быть положительным, получено {gamma}")
    if opts.check_existence:
        check_existence(kappa, gamma, opts)

    gamma_sq = gamma * gamma
    cached = _cache_lookup('gamma', kappa, gamma_sq, opts)
    if cached is not None:
        return cached

    params = _solve_system('gamma', kappa, gamma_sq, opts)
    _check_alpha(params)
    logger.info(f"Решение при κ={kappa:.4f}, γ²={gamma_sq:.4f}: α={params.alpha:.6f}, "
                f"σ★={params.sigma_star:.6f}, λ={params.lambda_:.6f} (невязка {params.residual_norm:.2e})")
    _cache_store(params, gamma_sq, opts)
    return params


def null_solution(kappa: float, opts: Optional[SolverOptions] = None) -> CorrectionParams:
    """
    Решение системы состояния при нулевом сигнале γ = 0.

    Уравнение смещения вырождается (Q₁ ≡ 0), поэтому α = 1, а σ★ и λ
    определяются двумя оставшимися уравнениями с Q₂ ~ N(0, κσ★²).

    Args:
        kappa: Отношение d/n
        opts: Параметры решателя

    Returns:
        CorrectionParams с α = 1, γ² = 0 и η² = κσ★²
    """
    opts = opts or SolverOptions()
    _validate_kappa(kappa)
    nodes, weights = _hermite_rule(opts.order)

    def residual(log_params: np.ndarray) -> np.ndarray:
        sigma_star, lam = np.exp(np.clip(log_params, -_LOG_BOUND, _LOG_BOUND))
        prox = prox_logistic(lam, math.sqrt(kappa) * sigma_star * nodes, tol=opts.prox_tol)
        variance_eq = np.sum(weights * (lam * sigmoid(prox)) ** 2) - kappa ** 2 * sigma_star ** 2
        hessian_eq = np.sum(weights / (1.0 + lam * sigmoid_derivative(prox))) - (1.0 - kappa)
        return np.array([variance_eq / kappa ** 2, hessian_eq / kappa])

    x0 = _initial_guess(kappa, 0.0)[1:]
    result = root(residual, x0, method='hybr', options={'xtol': 1e-13, 'maxfev': opts.max_iter})
    if not result.success:
        raise NoConvergence(f"Решение при нулевом сигнале не найдено для κ={kappa}: {result.message}")
    sigma_star, lam = (float(v) for v in np.exp(result.x))

    spec = gamma_covariance(1.0, sigma_star, kappa, 0.0)
    residuals = system_residuals(1.0, sigma_star, lam, kappa, spec, opts.order, opts.prox_tol)
    return CorrectionParams(alpha=1.0, sigma_star=sigma_star, lambda_=lam, kappa=kappa, gamma_sq=0.0,
                            eta_sq=kappa * sigma_star ** 2, residual_norm=float(np.max(np.abs(residuals))),
                            iterations=int(getattr(result, 'nfev', 0) or 0),
                            residuals=tuple(float(r) for r in residuals), order=opts.order, mode='null')


def null_floor(kappa: float, opts: Optional[SolverOptions] = None) -> float:
    """
    Наименьшее η², совместимое с κ: значение κσ★² при γ -> 0.

    Args:
        kappa: Отношение d/n
        opts: Параметры решателя

    Returns:
        Нижняя граница η²
    """
    return null_solution(kappa, opts).eta_sq


def solve_eta(kappa: float, eta: float, opts: Optional[SolverOptions] = None) -> CorrectionParams:
    """
    Решает систему состояния при заданных (κ, η).

    γ² не задается, а выводится как (η² - κσ★²)/α² в каждой точке поиска.

    Args:
        kappa: Отношение d/n в (0, 1)
        eta: Корень из искаженной силы сигнала η > 0
        opts: Параметры решателя

    Returns:
        CorrectionParams
    """
    opts = opts or SolverOptions()
    _validate_kappa(kappa)
    if not eta > 0:
        raise ValueError(f"η должно быть положительным, получено {eta}")
    eta_sq = eta * eta

    if opts.check_existence:
        table = _resolve_frontier(opts)
        if kappa >= (1.0 - opts.existence_margin) * table.kappa_star[0]:
            raise OutsideExistenceRegion(
                f"κ={kappa:.4f} выше границы при нулевом сигнале ({table.kappa_star[0]:.4f})",
                {'kappa': kappa, 'kappa_star_null': float(table.kappa_star[0])})

    null = null_solution(kappa, opts)
    floor = null.eta_sq
    if eta_sq <= floor:
        raise InconsistentEta(
            f"η²={eta_sq:.6f} не превышает κσ★² при нулевом сигнале ({floor:.6f}) для κ={kappa:.4f}",
            {'kappa': kappa, 'eta_sq': eta_sq, 'floor': floor})

    cached = _cache_lookup('eta', kappa, eta_sq, opts)
    if cached is not None:
        return cached

    start = None
    if eta_sq < _NEAR_NULL_RATIO * floor:
        start = np.log([1.0, null.sigma_star, null.lambda_])
    params = _solve_system('eta', kappa, eta_sq, opts, start)
    if opts.check_existence:
        check_existence(kappa, math.sqrt(params.gamma_sq), opts)
    _check_alpha(params)
    logger.info(f"Решение при κ={kappa:.4f}, η²={eta_sq:.4f}: α={params.alpha:.6f}, "
                f"σ★={params.sigma_star:.6f}, λ={params.lambda_:.6f}, γ²={params.gamma_sq:.4f}")
    _cache_store(params, eta_sq, opts)
    return params


def _check_alpha(params: CorrectionParams) -> None:
    if params.alpha < 1.0 - 1e-6:
        logger.warning(f"α={params.alpha:.8f} < 1 при κ={params.kappa}, γ²={params.gamma_sq}")


# Дисковый кэш решений

def _cache_path() -> Path:
    return Path(CACHE_DIR) / CACHE_FILE


def _cache_key(mode: str, kappa: float, target_sq: float, order: int) -> str:
    return f"{mode}|{kappa:.10g}|{target_sq:.10g}|{order}"


def _load_cache() -> pd.DataFrame:
    path = _cache_path()
    if not path.exists():
        return pd.DataFrame()
    try:
        with open(path, 'r', encoding='utf-8') as f:
            header = f.readline().strip()
        if header != f"# version={CACHE_VERSION}":
            logger.warning(f"Кэш {path} другой версии ({header}), игнорируется")
            return pd.DataFrame()
        return pd.read_csv(path, comment='#', dtype={'key': str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"Ошибка при загрузке кэша решений: {e}")
        return pd.DataFrame()


def _cache_lookup(mode: str, kappa: float, target_sq: float, opts: SolverOptions) -> Optional[CorrectionParams]:
    if not opts.use_cache:
        return None
    with _cache_lock:
        frame = _load_cache()
    if frame.empty:
        return None
    rows = frame[frame['key'] == _cache_key(mode, kappa, target_sq, opts.order)]
    if rows.empty:
        return None
    row = rows.iloc[-1]
    logger.debug(f"Решение взято из кэша: {row['key']}")
    return CorrectionParams(alpha=float(row['alpha']), sigma_star=float(row['sigma_star']),
                            lambda_=float(row['lambda']), kappa=kappa, gamma_sq=float(row['gamma_sq']),
                            eta_sq=float(row['eta_sq']), residual_norm=float(row['residual_norm']),
                            iterations=0, order=opts.order, mode=mode)


def _cache_store(params: CorrectionParams, target_sq: float, opts: SolverOptions) -> None:
    if not opts.use_cache:
        return
    row = pd.DataFrame([{
        'key': _cache_key(params.mode, params.kappa, target_sq, params.order),
        'alpha': params.alpha, 'sigma_star': params.sigma_star, 'lambda': params.lambda_,
        'gamma_sq': params.gamma_sq, 'eta_sq': params.eta_sq, 'residual_norm': params.residual_norm,
    }])
    path = _cache_path()
    with _cache_lock:
        try:
            frame = pd.concat([_load_cache(), row], ignore_index=True)
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix('.tmp')
            with open(tmp, 'w', encoding='utf-8', newline='') as f:
                f.write(f"# version={CACHE_VERSION}\n")
                frame.to_csv(f, index=False, float_format='%.17g')
            tmp.replace(path)
        except OSError as e:
            logger.error(f"Ошибка при сохранении кэша решений: {e}")


def with_frontier(opts: Optional[SolverOptions], frontier: Optional[FrontierTable]) -> SolverOptions:
    """Копия параметров с подставленной таблицей границы."""
    return replace(opts or SolverOptions(), frontier=frontier)
