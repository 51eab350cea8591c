# simulation_harness.py
"""
Эксперименты Монте-Карло: покрытие интервалов, равномерность нулевых
p-значений, сходимость SLOE, время работы, бутстреп и калибровка FDR.

Каждый повтор получает собственный генератор из (seed, номер точки сетки,
номер повтора, поток), поэтому результат не зависит от числа потоков.
"""
import json
import logging
import os
import time
from dataclasses import fields, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import kstest

from config import SIMULATION_DEFAULTS
from data_model import gen_features, simulate_dataset
from exceptions import (
    AlreadySeparable,
    ConfigError,
    InconsistentEta,
    NumericalError,
    OutsideExistenceRegion,
    SeparableData,
)
from inference import (
    bh_procedure,
    bootstrap_inference,
    classical_inference,
    coefficient_inference,
    corrected_predictions,
    feature_scaling,
)
from logistic_mle import fit_mle
from models import (
    CorrectionParams,
    Dataset,
    EstimatorMethod,
    ExperimentConfig,
    ExperimentResult,
    FeatureFamily,
    InferenceMethod,
    MleFit,
    SignalStrength,
    TruthSpec,
)
from probe_frontier import default_frontier, load_frontier, probe_frontier_gamma
from sloe_estimator import corrupted_signal_strength, sloe_logits
from state_evolution import SolverOptions, null_solution, solve_eta, solve_gamma, with_frontier
from utils import run_concurrent_tasks, sigmoid

# Настройка логирования
logger = logging.getLogger(__name__)

EXPERIMENTS = ('coverage', 'null_pvalues', 'sloe_convergence', 'runtime', 'bootstrap', 'fdr')

# Столбцы, зависящие от часов; исключаются при сравнении повторных запусков
TIMING_COLUMNS = ('median_seconds', 'mean_seconds', 'speedup')

# Потоки генератора внутри одного повтора
STREAM_TRAIN, STREAM_TEST, STREAM_BOOTSTRAP, STREAM_PROBE = range(4)

MIN_DIMENSION = 8

# Точки с почти нулевым истинным логитом не входят в отношение логитов
LOGIT_RATIO_MIN = 0.01


# Конфигурация

def load_experiment_config(path: str) -> ExperimentConfig:
    """
    Загружает конфигурацию эксперимента из плоского JSON-файла.

    Args:
        path: Путь к файлу

    Returns:
        Проверенный ExperimentConfig
    """
    if not os.path.exists(path):
        raise ConfigError(f"Файл конфигурации не найден: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Ошибка при загрузке файла конфигурации {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Конфигурация {path} должна быть JSON-объектом")
    logger.info(f"Загружена конфигурация из файла {path}")
    return config_from_dict(raw)


def config_from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Строит ExperimentConfig из словаря; неизвестные ключи - ошибка."""
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Неизвестные ключи конфигурации: {', '.join(unknown)}")

    values = dict(raw)
    try:
        if 'feature_family' in values:
            values['feature_family'] = FeatureFamily(str(values['feature_family']).upper())
        if 'methods' in values:
            values['methods'] = [InferenceMethod(str(m).upper()) for m in values['methods']]
        for key in ('kappa_grid', 'gamma_sq_grid', 'q_grid'):
            if key in values:
                values[key] = [float(v) for v in values[key]]
        if 'n_grid' in values:
            values['n_grid'] = [int(v) for v in values['n_grid']]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Некорректное значение в конфигурации: {e}") from e

    config = ExperimentConfig(**values)
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    """
    Проверяет конфигурацию эксперимента.

    Сетки непусты, reps >= 1, и d = round(κn) >= 8 в каждой точке сетки.
    """
    problems = []
    if config.experiment not in EXPERIMENTS:
        problems.append(f"experiment должен быть одним из {EXPERIMENTS}")
    if not config.kappa_grid or not config.gamma_sq_grid:
        problems.append("сетки kappa_grid и gamma_sq_grid не должны быть пустыми")
    if config.reps < 1:
        problems.append("reps должно быть >= 1")
    if not (0.0 < config.level < 1.0):
        problems.append("level должен лежать в (0, 1)")
    if not config.methods:
        problems.append("methods не должен быть пустым")
    if config.parallelism < 1:
        problems.append("parallelism должно быть >= 1")
    if config.seed < 0:
        problems.append("seed должно быть неотрицательным")
    if config.bootstrap_b < 1:
        problems.append("bootstrap_b должно быть >= 1")
    if config.test_size is not None and config.test_size < 1:
        problems.append("test_size должно быть >= 1")
    if config.covariance not in ('identity', 'empirical'):
        problems.append("covariance должен быть 'identity' или 'empirical'")
    if any(not (0.0 < k < 1.0) for k in config.kappa_grid):
        problems.append("значения κ должны лежать в (0, 1)")
    if any(g < 0 for g in config.gamma_sq_grid):
        problems.append("значения γ² должны быть неотрицательными")
    if any(not (0.0 <= q <= 1.0) for q in config.q_grid):
        problems.append("значения q должны лежать в [0, 1]")
    if config.experiment in ('sloe_convergence', 'runtime') and any(g <= 0 for g in config.gamma_sq_grid):
        problems.append(f"эксперимент {config.experiment} требует γ² > 0")
    for n in config.grid_sizes():
        if n < 1:
            problems.append(f"n должно быть положительным, получено {n}")
            continue
        for kappa in config.kappa_grid:
            if int(round(kappa * n)) < MIN_DIMENSION:
                problems.append(f"d = round({kappa}·{n}) < {MIN_DIMENSION}")
    if problems:
        raise ConfigError("Некорректная конфигурация: " + "; ".join(problems), {'problems': problems})


def sample_config(experiment: str = 'coverage') -> Dict[str, Any]:
    """Полный пример конфигурации для --create-config."""
    config = ExperimentConfig(experiment=experiment, n=1000, kappa_grid=[0.05, 0.1, 0.2],
                              gamma_sq_grid=[1.0, 5.0], reps=50, test_size=500, seed=2021,
                              parallelism=SIMULATION_DEFAULTS['jobs'])
    if experiment in ('sloe_convergence', 'runtime'):
        config.kappa_grid = [0.2]
        config.gamma_sq_grid = [1.0]
        config.n_grid = [400, 800, 1600]
    return config.to_dict()


# Общие части повторов

def _dimension(kappa: float, n: int) -> int:
    return int(round(kappa * n))


def _stream(config: ExperimentConfig, grid_index: int, rep: int, stream: int) -> List[int]:
    return [config.seed, grid_index, rep, stream]


def _test_size(config: ExperimentConfig, n: int) -> int:
    if config.test_size is not None:
        return config.test_size
    return min(n, SIMULATION_DEFAULTS['test_size_cap'])


def _drop_reason(error: Exception) -> str:
    if isinstance(error, (SeparableData, AlreadySeparable)):
        return 'separable'
    return 'solver'


def _solver_options(config: ExperimentConfig) -> SolverOptions:
    table = load_frontier(config.frontier_path) if config.frontier_path else default_frontier()
    return with_frontier(SolverOptions(), table)


def _simulate(config: ExperimentConfig, n: int, d: int, gamma_sq: float,
              grid_index: int, rep: int) -> Tuple[Dataset, TruthSpec]:
    return simulate_dataset(config.feature_family, n, d, gamma_sq, _stream(config, grid_index, rep, STREAM_TRAIN))


def _corrected(data: Dataset, fit: MleFit, opts: SolverOptions) -> Tuple[SignalStrength, CorrectionParams, bool]:
    """
    η̂² по SLOE и решение системы по η.

    Если η̂² не превышает нулевой границы κσ★², оценка сигнала γ̂ = 0 и
    берется решение при нулевом сигнале (α = 1); третий элемент - признак этого.
    """
    signal = corrupted_signal_strength(sloe_logits(fit, data))
    try:
        return signal, solve_eta(data.kappa, float(np.sqrt(signal.eta_sq)), opts), False
    except InconsistentEta as e:
        logger.debug(f"η̂² ниже нулевой границы, γ̂ = 0: {e}")
        return signal, null_solution(data.kappa, opts), True


def _guarded_method(row: Dict[str, Any], method: InferenceMethod, compute: Callable[[], Any]) -> Any:
    """Считает один метод повтора; численная ошибка отбрасывает только этот метод."""
    try:
        return compute()
    except NumericalError as e:
        reason = _drop_reason(e)
        logger.info(f"Метод {method.value} отброшен в повторе ({reason}): {e}")
        row[f'{method.value}_status'] = reason
        return None


def _method_status(row: Dict[str, Any], method: Optional[InferenceMethod]) -> str:
    if row['status'] != 'ok' or method is None:
        return row['status']
    return row.get(f'{method.value}_status', 'ok')


def _used_rows(rows: List[Dict[str, Any]], method: Optional[InferenceMethod] = None) -> List[Dict[str, Any]]:
    return [r for r in rows if _method_status(r, method) == 'ok']


def _accounting(rows: List[Dict[str, Any]], method: Optional[InferenceMethod] = None) -> Dict[str, Any]:
    total = len(rows)
    statuses = [_method_status(r, method) for r in rows]
    separable = statuses.count('separable')
    solver = statuses.count('solver')
    clamped = 0
    if method == InferenceMethod.CORRECTED:
        clamped = sum(1 for r, s in zip(rows, statuses) if s == 'ok' and r.get('clamped_null'))
    return {
        'reps_total': total,
        'reps_used': total - separable - solver,
        'dropped_separable': separable,
        'dropped_solver': solver,
        'separable_fraction': sum(1 for r in rows if r['status'] == 'separable') / total if total else 0.0,
        'clamped_null': clamped,
    }


def _run_reps(config: ExperimentConfig, task: Callable[[int], Dict[str, Any]],
              workers: Optional[int] = None) -> List[Dict[str, Any]]:
    def guarded(rep: int) -> Callable[[], Dict[str, Any]]:
        def run() -> Dict[str, Any]:
            try:
                row = task(rep)
                row.setdefault('status', 'ok')
            except NumericalError as e:
                reason = _drop_reason(e)
                logger.info(f"Повтор {rep} отброшен ({reason}): {e}")
                row = {'status': reason, 'error': type(e).__name__}
            row['rep'] = rep
            return row
        return run

    return run_concurrent_tasks([guarded(r) for r in range(config.reps)],
                                max_workers=workers or config.parallelism)


def _grid_points(config: ExperimentConfig) -> List[Tuple[int, float, float, int]]:
    """Точки (grid_index, γ², κ, n) в порядке: γ², затем n, затем возрастающее κ."""
    points = []
    for gamma_sq in config.gamma_sq_grid:
        for n in config.grid_sizes():
            for kappa in sorted(config.kappa_grid):
                points.append((len(points), gamma_sq, kappa, n))
    return points


def _point_fields(config: ExperimentConfig, n: int, kappa: float, gamma_sq: float) -> Dict[str, Any]:
    return {'experiment': config.experiment, 'n': n, 'd': _dimension(kappa, n), 'kappa': kappa,
            'gamma_sq': gamma_sq}


def _result(config: ExperimentConfig, records, raw, extras) -> ExperimentResult:
    resolved = config.to_dict()
    resolved['test_size_resolved'] = {str(n): _test_size(config, n) for n in config.grid_sizes()}
    return ExperimentResult(experiment=config.experiment, config=resolved, records=records,
                            raw=raw if config.keep_raw else [], extras=extras)


# Покрытие интервалов предсказаний (в том числе бутстреп)

def _logit_ratio(predicted: np.ndarray, true_logits: np.ndarray) -> float:
    """Медиана отношения предсказанного логита к истинному по точкам с |xᵀβ| > порога."""
    mask = np.abs(true_logits) > LOGIT_RATIO_MIN
    if not np.any(mask):
        return float('nan')
    return float(np.median(predicted[mask] / true_logits[mask]))


def _prediction_rep(config: ExperimentConfig, n: int, kappa: float, gamma_sq: float, grid_index: int,
                    rep: int, opts: SolverOptions) -> Dict[str, Any]:
    d = _dimension(kappa, n)
    data, truth = _simulate(config, n, d, gamma_sq, grid_index, rep)
    test = gen_features(config.feature_family, _test_size(config, n), d,
                        _stream(config, grid_index, rep, STREAM_TEST))
    true_logits = test @ truth.beta
    mu = sigmoid(true_logits)
    fit = fit_mle(data)

    row: Dict[str, Any] = {'bootstrap_dropped': 0, 'test_size': int(test.shape[0])}
    records = {}
    if InferenceMethod.CLASSICAL in config.methods:
        records[InferenceMethod.CLASSICAL] = classical_inference(fit, config.level, test_features=test).predictions

    if InferenceMethod.CORRECTED in config.methods:
        def corrected():
            _, params, clamped = _corrected(data, fit, opts)
            row['clamped_null'] = clamped
            scaling = feature_scaling(config.covariance, data.features)
            return corrected_predictions(fit, params, test, config.level, scaling)

        predictions = _guarded_method(row, InferenceMethod.CORRECTED, corrected)
        if predictions is not None:
            records[InferenceMethod.CORRECTED] = predictions

    if InferenceMethod.BOOTSTRAP in config.methods:
        outcome = _guarded_method(row, InferenceMethod.BOOTSTRAP, lambda: bootstrap_inference(
            data, config.level, config.bootstrap_b, _stream(config, grid_index, rep, STREAM_BOOTSTRAP),
            fit=fit, test_features=test))
        if outcome is not None:
            report, row['bootstrap_dropped'] = outcome
            records[InferenceMethod.BOOTSTRAP] = report.predictions
            centers = np.array([p.logit_debiased for p in report.predictions])
            row['bootstrap_logit_ratio'] = _logit_ratio(centers, true_logits)
            row['mle_logit_ratio'] = _logit_ratio(test @ fit.beta_hat, true_logits)

    for method, predictions in records.items():
        lo = np.array([p.prob_ci[0] for p in predictions])
        hi = np.array([p.prob_ci[1] for p in predictions])
        row[f'{method.value}_covered'] = int(np.sum((lo <= mu) & (mu <= hi)))
        row[f'{method.value}_width'] = float(np.mean(hi - lo))
    return row


def _coverage_records(config: ExperimentConfig, n: int, kappa: float, gamma_sq: float,
                      rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    records = []
    for method in config.methods:
        used = _used_rows(rows, method)
        total = sum(r['test_size'] for r in used)
        covered = sum(r[f'{method.value}_covered'] for r in used)
        coverage = covered / total if total else float('nan')
        record = _point_fields(config, n, kappa, gamma_sq)
        record.update({
            'method': method.value,
            'coverage': coverage,
            'coverage_se': float(np.sqrt(coverage * (1.0 - coverage) / total)) if total else float('nan'),
            'mean_ci_width': float(np.mean([r[f'{method.value}_width'] for r in used])) if used else float('nan'),
        })
        record.update(_accounting(rows, method))
        if method == InferenceMethod.BOOTSTRAP:
            record['bootstrap_dropped_replicates'] = int(sum(r['bootstrap_dropped'] for r in used))
            for name in ('bootstrap_logit_ratio', 'mle_logit_ratio'):
                values = np.array([r[name] for r in used if np.isfinite(r[name])])
                record[name] = float(np.median(values)) if values.size else float('nan')
        records.append(record)
    return records


def run_coverage(config: ExperimentConfig) -> ExperimentResult:
    """
    Покрытие истинных вероятностей μ_i интервалами на независимой тестовой выборке.

    Кривая по κ при фиксированном γ² обрывается, как только доля
    разделимых выборок превысит порог (по умолчанию 10%).

    Args:
        config: Конфигурация эксперимента

    Returns:
        ExperimentResult: строки по (γ², κ, метод) с покрытием, его SE и шириной
    """
    validate_config(config)
    opts = _solver_options(config) if InferenceMethod.CORRECTED in config.methods else SolverOptions()
    records, raw = [], []
    terminated = []
    stopped = set()

    for grid_index, gamma_sq, kappa, n in _grid_points(config):
        if (gamma_sq, n) in stopped:
            continue
        logger.info(f"Покрытие: n={n}, κ={kappa}, γ²={gamma_sq}, повторов {config.reps}")
        rows = _run_reps(config, lambda rep: _prediction_rep(config, n, kappa, gamma_sq, grid_index, rep, opts))
        point = _coverage_records(config, n, kappa, gamma_sq, rows)
        records.extend(point)
        raw.extend(dict(r, **_point_fields(config, n, kappa, gamma_sq)) for r in rows)

        if point and point[0]['separable_fraction'] > SIMULATION_DEFAULTS['separable_stop_fraction']:
            logger.warning(f"Кривая γ²={gamma_sq} оборвана на κ={kappa}: "
                           f"доля разделимых выборок {point[0]['separable_fraction']:.2f}")
            stopped.add((gamma_sq, n))
            terminated.append({'gamma_sq': gamma_sq, 'n': n, 'kappa': kappa})

    return _result(config, records, raw, {'terminated': terminated})


def run_bootstrap_baseline(config: ExperimentConfig) -> ExperimentResult:
    """
    Процентильный бутстреп в сравнении со скорректированными интервалами.

    Бутстреп-реплики с разделимыми взвешенными данными отбрасываются и
    подсчитываются в bootstrap_dropped_replicates.
    """
    methods = list(config.methods)
    for method in (InferenceMethod.CORRECTED, InferenceMethod.BOOTSTRAP):
        if method not in methods:
            methods.append(method)
    return run_coverage(replace(config, methods=methods))


# Нулевые p-значения и FDR

def _pvalue_rep(config: ExperimentConfig, n: int, kappa: float, gamma_sq: float, grid_index: int,
                rep: int, opts: SolverOptions) -> Dict[str, Any]:
    d = _dimension(kappa, n)
    data, truth = _simulate(config, n, d, gamma_sq, grid_index, rep)
    fit = fit_mle(data)
    row: Dict[str, Any] = {'null_mask': truth.beta == 0}
    if InferenceMethod.CLASSICAL in config.methods:
        row[InferenceMethod.CLASSICAL.value] = classical_inference(fit, config.level).p_values()
    if InferenceMethod.CORRECTED in config.methods:
        def corrected():
            _, params, clamped = _corrected(data, fit, opts)
            row['clamped_null'] = clamped
            scaling = feature_scaling(config.covariance, data.features)
            return coefficient_inference(fit, params, config.level, scaling).p_values()

        p_values = _guarded_method(row, InferenceMethod.CORRECTED, corrected)
        if p_values is not None:
            row[InferenceMethod.CORRECTED.value] = p_values
    return row


def _pvalue_methods(config: ExperimentConfig) -> List[InferenceMethod]:
    return [m for m in config.methods if m in (InferenceMethod.CLASSICAL, InferenceMethod.CORRECTED)]


def run_null_pvalues(config: ExperimentConfig) -> ExperimentResult:
    """
    Собирает p-значения нулевых координат и проверяет их равномерность критерием Колмогорова-Смирнова.

    Args:
        config: Конфигурация эксперимента

    Returns:
        ExperimentResult: KS-статистики по методам; сами p-значения в extras['pvalues']
    """
    validate_config(config)
    opts = _solver_options(config) if InferenceMethod.CORRECTED in config.methods else SolverOptions()
    methods = _pvalue_methods(config)
    if not methods:
        raise ConfigError("Для null_pvalues нужен хотя бы один из методов CLASSICAL, CORRECTED")
    records, pvalues = [], []

    for grid_index, gamma_sq, kappa, n in _grid_points(config):
        logger.info(f"Нулевые p-значения: n={n}, κ={kappa}, γ²={gamma_sq}")
        rows = _run_reps(config, lambda rep: _pvalue_rep(config, n, kappa, gamma_sq, grid_index, rep, opts))
        point_values = {}
        for method in methods:
            used = _used_rows(rows, method)
            pooled = np.concatenate([r[method.value][r['null_mask']] for r in used]) if used else np.array([])
            point_values[method.value] = pooled
            record = _point_fields(config, n, kappa, gamma_sq)
            record['method'] = method.value
            record['n_pvalues'] = int(pooled.size)
            if pooled.size:
                test = kstest(pooled, 'uniform')
                record.update({'ks_statistic': float(test.statistic), 'ks_pvalue': float(test.pvalue)})
            else:
                record.update({'ks_statistic': float('nan'), 'ks_pvalue': float('nan')})
            record.update(_accounting(rows, method))
            records.append(record)
        pvalues.append({**_point_fields(config, n, kappa, gamma_sq), 'pvalues': point_values})

    return _result(config, records, [], {'pvalues': pvalues})


def _fdr_rep(config: ExperimentConfig, n: int, kappa: float, gamma_sq: float, grid_index: int,
             rep: int, opts: SolverOptions) -> Dict[str, Any]:
    row = _pvalue_rep(config, n, kappa, gamma_sq, grid_index, rep, opts)
    null_mask = row['null_mask']
    result: Dict[str, Any] = {}
    for method in _pvalue_methods(config):
        if method.value not in row:
            continue
        p = row[method.value]
        for q in config.q_grid:
            selected = bh_procedure(p, q)
            false = int(np.sum(null_mask[selected]))
            true = int(selected.size - false)
            result[(method.value, q)] = {
                'fdp': false / selected.size if selected.size else 0.0,
                'selected': int(selected.size),
                'power': true / max(1, int(np.sum(~null_mask))),
            }
    kept = {k: v for k, v in row.items() if k.endswith('_status') or k == 'clamped_null'}
    return {'fdr': result, **kept}


def run_fdr_calibration(config: ExperimentConfig) -> ExperimentResult:
    """
    Эмпирическая доля ложных открытий процедуры Бенджамини-Хохберга на сетке q.

    Коэффициенты make_beta содержат как ненулевые, так и нулевые блоки.
    При пустом отборе FDP считается равной 0.
    """
    validate_config(config)
    opts = _solver_options(config) if InferenceMethod.CORRECTED in config.methods else SolverOptions()
    methods = _pvalue_methods(config)
    if not methods:
        raise ConfigError("Для fdr нужен хотя бы один из методов CLASSICAL, CORRECTED")
    records = []

    for grid_index, gamma_sq, kappa, n in _grid_points(config):
        logger.info(f"Калибровка FDR: n={n}, κ={kappa}, γ²={gamma_sq}")
        rows = _run_reps(config, lambda rep: _fdr_rep(config, n, kappa, gamma_sq, grid_index, rep, opts))
        for method in methods:
            used = _used_rows(rows, method)
            accounting = _accounting(rows, method)
            for q in config.q_grid:
                entries = [r['fdr'][(method.value, q)] for r in used]
                fdp = np.array([e['fdp'] for e in entries])
                record = _point_fields(config, n, kappa, gamma_sq)
                record.update({
                    'method': method.value,
                    'q': q,
                    'fdp_mean': float(np.mean(fdp)) if fdp.size else float('nan'),
                    'fdp_se': float(np.std(fdp) / np.sqrt(fdp.size)) if fdp.size else float('nan'),
                    'mean_selected': float(np.mean([e['selected'] for e in entries])) if entries else float('nan'),
                    'power': float(np.mean([e['power'] for e in entries])) if entries else float('nan'),
                })
                record.update(accounting)
                records.append(record)

    return _result(config, records, [], {})


# Сходимость SLOE

def run_sloe_convergence(config: ExperimentConfig) -> ExperimentResult:
    """
    Средние квадраты разностей (η̂²_SLOE - η²)², (β̂ᵀΣβ̂ - η²)² и (η̂²_SLOE - β̂ᵀΣβ̂)² по сетке n.

    Истинное η² берется из решения системы состояния при (κ, γ).
    Оба семейства признаков имеют единичную ковариацию, поэтому β̂ᵀΣβ̂ = ‖β̂‖².
    Точка вне области существования ОМП попадает в результат со статусом
    point_status = 'outside_existence' и не прерывает эксперимент.
    """
    validate_config(config)
    opts = _solver_options(config)
    records, raw = [], []
    truth_cache: Dict[Tuple[float, float], Any] = {}
    metrics = ('sloe_vs_truth', 'quad_vs_truth', 'sloe_vs_quad')

    for grid_index, gamma_sq, kappa, n in _grid_points(config):
        d = _dimension(kappa, n)
        # κ сетки и фактическое d/n могут немного различаться
        actual_kappa = d / n
        key = (actual_kappa, gamma_sq)
        if key not in truth_cache:
            try:
                truth_cache[key] = solve_gamma(actual_kappa, float(np.sqrt(gamma_sq)), opts).eta_sq
            except NumericalError as e:
                truth_cache[key] = e
        truth = truth_cache[key]
        record = _point_fields(config, n, kappa, gamma_sq)
        record['method'] = EstimatorMethod.SLOE.value

        if isinstance(truth, NumericalError):
            status = 'outside_existence' if isinstance(truth, OutsideExistenceRegion) else 'solver'
            logger.warning(f"Сходимость SLOE: точка n={n}, κ={kappa}, γ²={gamma_sq} пропущена ({status}): {truth}")
            record.update({'point_status': status, 'eta_sq': float('nan')})
            for name in metrics:
                record[f'mean_{name}'] = float('nan')
                record[f'median_{name}'] = float('nan')
            record.update(_accounting([]))
            records.append(record)
            continue
        eta_sq = truth

        def task(rep: int) -> Dict[str, Any]:
            data, _ = _simulate(config, n, d, gamma_sq, grid_index, rep)
            fit = fit_mle(data)
            sloe = corrupted_signal_strength(sloe_logits(fit, data)).eta_sq
            quad = float(fit.beta_hat @ fit.beta_hat)
            return {'sloe_vs_truth': (sloe - eta_sq) ** 2, 'quad_vs_truth': (quad - eta_sq) ** 2,
                    'sloe_vs_quad': (sloe - quad) ** 2, 'eta_sq_hat': sloe, 'quad': quad}

        logger.info(f"Сходимость SLOE: n={n}, κ={kappa}, γ²={gamma_sq}, η²={eta_sq:.4f}")
        rows = _run_reps(config, task)
        used = _used_rows(rows)
        record.update({'point_status': 'ok', 'eta_sq': eta_sq})
        for name in metrics:
            values = np.array([r[name] for r in used])
            record[f'mean_{name}'] = float(np.mean(values)) if values.size else float('nan')
            record[f'median_{name}'] = float(np.median(values)) if values.size else float('nan')
        record.update(_accounting(rows))
        records.append(record)
        raw.extend(dict(r, **_point_fields(config, n, kappa, gamma_sq)) for r in rows)

    return _result(config, records, raw, {})


# Время работы

def run_runtime(config: ExperimentConfig) -> ExperimentResult:
    """
    Медианное время оценки параметров: SLOE против ProbeFrontier.

    Подгонка ОМП и генерация данных не входят во время обоих методов.
    SLOE: LOO-логиты, η̂², решение системы по η. ProbeFrontier: поиск
    подвыборки, обращение границы и решение системы по γ. Повторы
    выполняются последовательно, чтобы потоки не искажали замеры.
    """
    validate_config(config)
    opts = _solver_options(config)
    table = opts.frontier
    records, raw = [], []
    speedups = []

    for grid_index, gamma_sq, kappa, n in _grid_points(config):
        d = _dimension(kappa, n)

        def task(rep: int) -> Dict[str, Any]:
            data, _ = _simulate(config, n, d, gamma_sq, grid_index, rep)
            fit = fit_mle(data)

            start = time.perf_counter()
            signal = corrupted_signal_strength(sloe_logits(fit, data))
            solve_eta(data.kappa, float(np.sqrt(signal.eta_sq)), opts)
            sloe_seconds = time.perf_counter() - start

            start = time.perf_counter()
            probe_frontier_gamma(data, table, seed=_stream(config, grid_index, rep, STREAM_PROBE), opts=opts)
            probe_seconds = time.perf_counter() - start
            return {'SLOE_seconds': sloe_seconds, 'PROBE_FRONTIER_seconds': probe_seconds}

        logger.info(f"Время работы: n={n}, κ={kappa}, γ²={gamma_sq}")
        rows = _run_reps(config, task, workers=1)
        used = [r for r in rows if r['status'] == 'ok']
        accounting = _accounting(rows)
        medians = {}
        for method in (EstimatorMethod.SLOE, EstimatorMethod.PROBE_FRONTIER):
            values = np.array([r[f'{method.value}_seconds'] for r in used])
            medians[method] = float(np.median(values)) if values.size else float('nan')
            record = _point_fields(config, n, kappa, gamma_sq)
            record.update({'method': method.value, 'median_seconds': medians[method],
                           'mean_seconds': float(np.mean(values)) if values.size else float('nan')})
            record.update(accounting)
            records.append(record)
        speedup = medians[EstimatorMethod.PROBE_FRONTIER] / medians[EstimatorMethod.SLOE] \
            if medians[EstimatorMethod.SLOE] > 0 else float('nan')
        speedups.append({**_point_fields(config, n, kappa, gamma_sq), 'speedup': speedup})
        logger.info(f"n={n}: SLOE быстрее ProbeFrontier в {speedup:.1f} раз")
        raw.extend(dict(r, **_point_fields(config, n, kappa, gamma_sq)) for r in rows)

    return _result(config, records, raw, {'speedup': speedups})


RUNNERS = {
    'coverage': run_coverage,
    'null_pvalues': run_null_pvalues,
    'sloe_convergence': run_sloe_convergence,
    'runtime': run_runtime,
    'bootstrap': run_bootstrap_baseline,
    'fdr': run_fdr_calibration,
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Запускает эксперимент, указанный в config.experiment."""
    validate_config(config)
    logger.info(f"Эксперимент {config.experiment}: seed={config.seed}, потоков {config.parallelism}")
    return RUNNERS[config.experiment](config)
