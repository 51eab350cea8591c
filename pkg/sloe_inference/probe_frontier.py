# probe_frontier.py
import logging
import os
import threading
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import isotonic_regression

from config import CACHE_DIR, FRONTIER_CONFIG, FRONTIER_PATH, SLOE_CONFIG
from data_model import gen_gaussian, gen_outcomes, make_beta
from exceptions import AlreadySeparable, DataError, FrontierOutOfRange, MissingFileError
from logistic_mle import check_separable
from models import Dataset, EstimatorMethod, FrontierProvenance, FrontierTable, SignalStrength
from state_evolution import SolverOptions, solve_gamma, with_frontier
from utils import SeedLike, make_rng, run_concurrent_tasks

# Настройка логирования
logger = logging.getLogger(__name__)

FRONTIER_FILE = "frontier.csv"

# Минимальный шаг строгого убывания κ★ после изотонической регрессии
_STRICT_DECREMENT = 1e-6

_default_table: Optional[FrontierTable] = None
_default_lock = threading.Lock()


def frontier_beta(d: int, gamma: float) -> np.ndarray:
    """
    Вектор коэффициентов с нормой ровно γ для симуляций границы.

    Форма блоков берется из make_beta; при d < 4 блоки пусты,
    и весь сигнал кладется в первую координату.
    """
    beta = make_beta(d, 1.0)
    norm = float(np.linalg.norm(beta))
    if norm == 0.0:
        beta = np.zeros(d)
        beta[0] = 1.0
        norm = 1.0
    return beta * (gamma / norm)


def separation_frequency(draw: Callable[[int], Dataset], reps: int, workers: int = 1) -> float:
    """
    Доля разделимых наборов среди reps независимых реализаций.

    Args:
        draw: Функция номер_повтора -> Dataset
        reps: Число повторов
        workers: Число потоков

    Returns:
        Частота разделимости в [0, 1]
    """
    if reps < 1:
        raise ValueError(f"Число повторов должно быть >= 1, получено {reps}")
    tasks = [lambda r=r: check_separable(draw(r)) for r in range(reps)]
    flags = run_concurrent_tasks(tasks, max_workers=workers)
    return float(np.mean(flags))


def _simulated_frequency(kappa: float, gamma: float, n_sim: int, reps: int,
                         seed: Sequence[int], workers: int) -> float:
    d = max(1, int(round(kappa * n_sim)))
    beta = frontier_beta(d, gamma)

    def draw(rep: int) -> Dataset:
        stream = list(seed) + [rep]
        features = gen_gaussian(n_sim, d, stream + [0])
        outcomes, _ = gen_outcomes(features, beta, stream + [1])
        return Dataset(features=features, outcomes=outcomes)

    return separation_frequency(draw, reps, workers)


def _bisect_kappa(gamma: float, gamma_index: int, n_sim: int, reps: int, seed: int,
                  workers: int) -> float:
    lo, hi = FRONTIER_CONFIG['kappa_bracket']
    for step in range(FRONTIER_CONFIG['bisection_steps']):
        mid = 0.5 * (lo + hi)
        frequency = _simulated_frequency(mid, gamma, n_sim, reps, [seed, gamma_index, step], workers)
        if frequency >= FRONTIER_CONFIG['threshold']:
            hi = mid
        else:
            lo = mid
        logger.debug(f"γ={gamma:.3f}, шаг {step}: κ={mid:.4f}, частота разделимости {frequency:.3f}")
    return 0.5 * (lo + hi)


def monotone_regularize(kappa_star: np.ndarray) -> np.ndarray:
    """Изотоническая проекция на убывающие последовательности, затем строгое убывание."""
    fitted = np.array(isotonic_regression(np.asarray(kappa_star, dtype=float), increasing=False).x)
    for i in range(1, fitted.shape[0]):
        if fitted[i] > fitted[i - 1] - _STRICT_DECREMENT:
            fitted[i] = fitted[i - 1] - _STRICT_DECREMENT
    return fitted


def build_frontier(gamma_grid: Sequence[float] = tuple(FRONTIER_CONFIG['gamma_grid']),
                   n_sim: int = FRONTIER_CONFIG['n_sim'], reps: int = FRONTIER_CONFIG['reps'],
                   seed: int = FRONTIER_CONFIG['seed'], workers: int = SLOE_CONFIG['loo_workers']) -> FrontierTable:
    """
    Табулирует границу разделимости κ★(γ) методом Монте-Карло.

    Для каждого γ бисекцией по κ ищется точка, где доля разделимых
    гауссовых выборок размера n_sim пересекает 1/2. Сырая кривая затем
    проецируется на строго убывающие последовательности.

    Args:
        gamma_grid: Положительная возрастающая сетка γ
        n_sim: Размер симулированных выборок
        reps: Повторов на шаг бисекции
        seed: Зерно построения
        workers: Число потоков

    Returns:
        FrontierTable с provenance MONTE_CARLO
    """
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.size < 2 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("Сетка γ должна быть положительной, строго возрастающей и иметь не менее двух узлов")
    if n_sim < 2 or reps < 1:
        raise ValueError(f"Недопустимые параметры построения: n_sim={n_sim}, reps={reps}")

    logger.info(f"Построение таблицы границы: {grid.size} узлов γ, n_sim={n_sim}, reps={reps}, seed={seed}")
    tasks = [lambda i=i, g=g: _bisect_kappa(float(g), i, n_sim, reps, seed, 1) for i, g in enumerate(grid)]
    raw = np.array(run_concurrent_tasks(tasks, max_workers=workers))
    kappa_star = monotone_regularize(raw)

    for g, r, k in zip(grid, raw, kappa_star):
        logger.debug(f"γ={g:.3f}: κ★ сырое {r:.4f}, после регуляризации {k:.4f}")
    if abs(kappa_star[0] - 0.5) > 0.05:
        logger.warning(f"κ★ при малом γ={grid[0]:.3f} равно {kappa_star[0]:.4f}, ожидалось около 0.5")

    return FrontierTable(gamma=grid, kappa_star=kappa_star, provenance=FrontierProvenance.MONTE_CARLO,
                         n_sim=n_sim, reps=reps, seed=seed, version=FRONTIER_CONFIG['version'])


def save_frontier(table: FrontierTable, path: str) -> str:
    """
    Сохраняет таблицу в CSV: строка-комментарий с параметрами построения и столбцы gamma,kappa_star.

    Args:
        table: Таблица границы
        path: Путь к файлу

    Returns:
        Путь к сохраненному файлу
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({'gamma': table.gamma, 'kappa_star': table.kappa_star})
    tmp = target.with_name(target.name + '.tmp')
    with open(tmp, 'w', encoding='utf-8', newline='') as f:
        f.write(f"# n_sim={table.n_sim},reps={table.reps},seed={table.seed},"
                f"version={table.version},provenance={table.provenance.value}\n")
        frame.to_csv(f, index=False, float_format='%.10g')
    os.replace(tmp, target)
    logger.info(f"Таблица границы сохранена в {target}")
    return str(target)


def _parse_metadata(line: str) -> dict:
    meta = {}
    for item in line.lstrip('#').strip().split(','):
        if '=' in item:
            key, value = item.split('=', 1)
            meta[key.strip()] = value.strip()
    return meta


def load_frontier(path: str) -> FrontierTable:
    """
    Загружает таблицу границы из CSV.

    Файл без строки-комментария считается пользовательским (USER_SUPPLIED).

    Args:
        path: Путь к файлу

    Returns:
        FrontierTable
    """
    if not os.path.exists(path):
        raise MissingFileError(f"Таблица границы не найдена: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            first = f.readline()
        frame = pd.read_csv(path, comment='#')
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Не удалось прочитать таблицу границы {path}: {e}") from e

    if list(frame.columns) != ['gamma', 'kappa_star']:
        raise DataError(f"Заголовок таблицы границы должен быть gamma,kappa_star, получено {list(frame.columns)}")

    meta = _parse_metadata(first) if first.startswith('#') else {}
    try:
        provenance = FrontierProvenance(meta.get('provenance', FrontierProvenance.USER_SUPPLIED.value))
        table = FrontierTable(gamma=frame['gamma'].to_numpy(dtype=float),
                              kappa_star=frame['kappa_star'].to_numpy(dtype=float),
                              provenance=provenance, n_sim=int(meta.get('n_sim', 0)),
                              reps=int(meta.get('reps', 0)), seed=int(meta.get('seed', 0)),
                              version=int(meta.get('version', FRONTIER_CONFIG['version'])))
    except ValueError as e:
        raise DataError(f"Некорректная таблица границы {path}: {e}") from e

    logger.debug(f"Загружена таблица границы {path}: {len(frame)} строк, {provenance.value}")
    return table


def default_frontier_path() -> Path:
    """Путь к таблице границы: SLOE_FRONTIER_PATH или файл в каталоге кэша."""
    if FRONTIER_PATH:
        return Path(FRONTIER_PATH)
    return Path(CACHE_DIR) / FRONTIER_FILE


def default_frontier() -> FrontierTable:
    """
    Таблица границы по умолчанию.

    Загружается из файла; если файла нет, строится с параметрами
    FRONTIER_CONFIG и сохраняется для следующих запусков.
    """
    global _default_table
    with _default_lock:
        if _default_table is not None:
            return _default_table

        path = default_frontier_path()
        if path.exists():
            _default_table = load_frontier(str(path))
            return _default_table

        logger.warning(f"Таблица границы не найдена в {path}; строится заново (это займет несколько минут)")
        table = build_frontier()
        try:
            save_frontier(table, str(path))
        except OSError as e:
            logger.error(f"Ошибка при сохранении таблицы границы: {e}")
        _default_table = table
        return table


def set_default_frontier(table: Optional[FrontierTable]) -> None:
    """Подменяет таблицу по умолчанию в памяти (None сбрасывает)."""
    global _default_table
    with _default_lock:
        _default_table = table


def _invert_frontier(table: FrontierTable, kappa_star_hat: float) -> float:
    lowest = float(table.kappa_star[-1])
    highest = float(table.kappa_star[0])
    if kappa_star_hat < lowest:
        raise FrontierOutOfRange(
            f"κ̂★={kappa_star_hat:.4f} ниже минимума таблицы ({lowest:.4f}): γ за пределами сетки",
            {'kappa_star_hat': kappa_star_hat, 'table_min': lowest, 'gamma_max': float(table.gamma[-1])})
    if kappa_star_hat > highest:
        logger.warning(f"κ̂★={kappa_star_hat:.4f} выше κ★ нулевого сигнала ({highest:.4f}); "
                       f"γ̂ ограничено снизу значением {table.gamma[0]:.3f}")
        return float(table.gamma[0])
    return table.gamma_at(kappa_star_hat)


def probe_frontier_gamma(data: Dataset, table: FrontierTable,
                         subsample_reps: int = FRONTIER_CONFIG['subsample_reps'], seed: SeedLike = 0,
                         opts: Optional[SolverOptions] = None, workers: int = 1) -> SignalStrength:
    """
    Оценивает силу сигнала поиском размера подвыборки, на котором данные становятся разделимыми.

    Бинарный поиск по n′ между d (подвыборка из d точек разделима в общем
    положении) и n (полные данные не разделимы). На каждом кандидате
    берется subsample_reps подвыборок без возвращения; n′ - наибольший
    размер с долей разделимых подвыборок не менее 1/2. Затем
    κ̂★ = d/n′ обращается по таблице в γ̂, и η² = α²γ̂² + κσ★² берется из
    решения системы состояния при (κ, γ̂).

    Args:
        data: Набор данных (полные данные не должны быть разделимы)
        table: Таблица границы
        subsample_reps: Подвыборок на кандидата
        seed: Зерно
        opts: Параметры решателя
        workers: Число потоков для проверки подвыборок

    Returns:
        SignalStrength с методом PROBE_FRONTIER
    """
    if subsample_reps < 1:
        raise ValueError(f"subsample_reps должно быть >= 1, получено {subsample_reps}")
    if check_separable(data):
        raise AlreadySeparable("данные разделимы уже на полной выборке", {'n': data.n, 'd': data.d})

    base = [seed] if isinstance(seed, (int, np.integer)) else list(seed)
    probes: List[dict] = []

    def frequency_at(size: int) -> float:
        rng = make_rng(base + [size])
        subsets = [rng.choice(data.n, size=size, replace=False) for _ in range(subsample_reps)]
        value = separation_frequency(lambda r: data.subset(subsets[r]), subsample_reps, workers)
        probes.append({'n_prime': size, 'frequency': value})
        return value

    lo, hi = data.d, data.n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if frequency_at(mid) >= FRONTIER_CONFIG['threshold']:
            lo = mid
        else:
            hi = mid

    n_prime = lo
    if n_prime == data.d:
        # Ни один размер выше d не дал разделимости: κ̂★ = 1 вне (κ, 0.5]
        raise FrontierOutOfRange(
            f"ни один размер подвыборки в ({data.d}, {data.n}) не разделим хотя бы в половине случаев",
            {'n': data.n, 'd': data.d, 'probes': probes})
    kappa_star_hat = data.d / n_prime
    gamma_hat = _invert_frontier(table, kappa_star_hat)
    logger.info(f"ProbeFrontier: n′={n_prime}, κ̂★={kappa_star_hat:.4f}, γ̂={gamma_hat:.4f} "
                f"({len(probes)} размеров подвыборки)")

    params = solve_gamma(data.kappa, gamma_hat, with_frontier(opts, table))
    diagnostics = {
        'gamma_hat': gamma_hat,
        'gamma_sq_hat': gamma_hat ** 2,
        'kappa_star_hat': kappa_star_hat,
        'n_prime': n_prime,
        'probes': probes,
        'alpha': params.alpha,
        'sigma_star': params.sigma_star,
    }
    return SignalStrength(eta_sq=params.eta_sq, method=EstimatorMethod.PROBE_FRONTIER, diagnostics=diagnostics)
