# main.py

import argparse
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional

from config import FRONTIER_CONFIG, LOG_LEVEL, SIMULATION_DEFAULTS, SLOE_CONFIG, SOLVER_CONFIG
from data_model import load_csv, load_feature_rows
from exceptions import ConfigError, DataError, SeparableData, SloeError
from export_utils import atomic_write_text, print_summary, save_results, to_json, with_metadata
from inference import classical_inference, corrected_pipeline, to_raw_scale
from models import EstimatorMethod
from probe_frontier import build_frontier, default_frontier_path, load_frontier, save_frontier
from simulation_harness import EXPERIMENTS, load_experiment_config, run_experiment, sample_config
from state_evolution import SolverOptions, solve_eta, solve_gamma

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

SEPARABLE_MESSAGE = "data linearly separable; MLE does not exist"


class UsageError(Exception):
    """Ошибка разбора аргументов командной строки."""


class CliParser(argparse.ArgumentParser):
    # argparse по умолчанию завершает процесс с кодом 2, который занят ошибками данных
    def error(self, message):
        raise UsageError(message)


def setup_logging(log_level: str = 'INFO', log_file: Optional[str] = None) -> None:
    """
    Настраивает логирование для приложения с поддержкой Unicode.

    Консольный обработчик пишет в stderr: stdout зарезервирован для JSON.

    Args:
        log_level: Уровень логирования ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
        log_file: Путь к файлу логов. Если None, логи пишутся только в stderr.
    """
    levels = {
        'DEBUG': logging.DEBUG,
        'INFO': logging.INFO,
        'WARNING': logging.WARNING,
        'ERROR': logging.ERROR,
        'CRITICAL': logging.CRITICAL
    }
    numeric_level = levels.get(log_level.upper(), logging.INFO)
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    formatter = logging.Formatter(log_format)
    console_handler = logging.StreamHandler(sys.stderr)

    if sys.platform == 'win32':
        # Пробуем переключить консоль Windows на UTF-8
        try:
            import ctypes
            kernel32 = ctypes.windll.kernel32
            kernel32.SetConsoleCP(65001)
            kernel32.SetConsoleOutputCP(65001)
        except (AttributeError, OSError):
            # Если не удалось переключить кодировку, используем транслитерацию для логов
            class TransliteratingHandler(logging.StreamHandler):
                def emit(self, record):
                    try:
                        from unidecode import unidecode
                        self.stream.write(unidecode(self.format(record)) + self.terminator)
                        self.flush()
                    except Exception:
                        self.handleError(record)

            console_handler = TransliteratingHandler(sys.stderr)

    console_handler.setFormatter(formatter)
    console_handler.setLevel(numeric_level)
    root_logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        file_handler.setLevel(numeric_level)
        root_logger.addHandler(file_handler)


def build_parser() -> CliParser:
    """
    Строит разборщик аргументов с подкомандами fit, solve, simulate, frontier.

    Returns:
        Разборщик аргументов
    """
    parser = CliParser(description='Скорректированный по размерности вывод для логистической регрессии')
    parser.add_argument('-l', '--log-level', choices=LOG_LEVELS,
                        default=LOG_LEVEL.upper() if LOG_LEVEL.upper() in LOG_LEVELS else 'INFO',
                        help='Уровень логирования (по умолчанию: SLOE_LOG_LEVEL или INFO)')
    parser.add_argument('--log-file', type=str, help='Путь к файлу логов (по умолчанию логи только в stderr)')
    subparsers = parser.add_subparsers(dest='command', parser_class=CliParser)

    fit = subparsers.add_parser('fit', help='Подогнать модель по CSV и вывести скорректированный отчет')
    fit.add_argument('csv', help='Путь к CSV-файлу с обучающими данными')
    fit.add_argument('--outcome', required=True, help='Имя столбца отклика (0/1)')
    fit.add_argument('--level', type=float, default=SIMULATION_DEFAULTS['level'],
                     help='Уровень доверия в (0, 1) (по умолчанию: 0.9)')
    fit.add_argument('--covariance', choices=['identity', 'empirical'], default='empirical',
                     help='Масштабирование по ковариации признаков (по умолчанию: empirical)')
    fit.add_argument('--method', choices=[EstimatorMethod.SLOE.value, EstimatorMethod.LOO_EXACT.value],
                     default=EstimatorMethod.SLOE.value, help='Оценщик η² (по умолчанию: SLOE)')
    fit.add_argument('--test-csv', type=str, help='CSV с тестовыми точками для интервалов предсказаний')
    fit.add_argument('--standardize', action='store_true', help='Стандартизовать признаки перед подгонкой')
    fit.add_argument('--raw-scale', action='store_true',
                     help='Добавить отчет в исходных единицах (требует --standardize)')
    fit.add_argument('--classical', action='store_true', help='Добавить классический отчет для сравнения')
    fit.add_argument('--jobs', type=int, default=SLOE_CONFIG['loo_workers'], help='Число потоков')
    fit.add_argument('-o', '--output', type=str, help='Записать JSON в файл вместо stdout')

    solve = subparsers.add_parser('solve', help='Решить систему уравнений состояния')
    solve.add_argument('--kappa', type=float, required=True, help='Отношение d/n в (0, 1)')
    target = solve.add_mutually_exclusive_group(required=True)
    target.add_argument('--gamma', type=float, help='Корень из силы сигнала γ')
    target.add_argument('--eta', type=float, help='Корень из искаженной силы сигнала η')
    solve.add_argument('--order', type=int, default=SOLVER_CONFIG['order'], help='Узлов Гаусса-Эрмита на ось')
    solve.add_argument('--tol', type=float, default=SOLVER_CONFIG['tol'], help='Допуск на невязки')
    solve.add_argument('--frontier', type=str, help='CSV таблицы границы (по умолчанию из кэша)')
    solve.add_argument('--no-existence-check', action='store_true', help='Не проверять область существования')
    solve.add_argument('--no-cache', action='store_true', help='Не использовать дисковый кэш решений')

    simulate = subparsers.add_parser('simulate', help='Запустить эксперимент Монте-Карло')
    simulate.add_argument('config', nargs='?', help='Путь к JSON-конфигурации эксперимента')
    simulate.add_argument('-o', '--output', type=str,
                          help='Префикс выходных файлов (по умолчанию: <experiment>_results)')
    simulate.add_argument('--jobs', type=int, help='Число рабочих потоков (перекрывает конфигурацию)')
    simulate.add_argument('--seed', type=int, help='Базовое зерно (перекрывает конфигурацию)')
    simulate.add_argument('--plot-data', action='store_true', help='Сохранять сырые строки по повторам')
    simulate.add_argument('--create-config', nargs='?', const='sample_config.json', metavar='PATH',
                          help='Создать пример конфигурации и выйти')
    simulate.add_argument('--experiment', choices=EXPERIMENTS, default='coverage',
                          help='Тип эксперимента для --create-config')

    frontier = subparsers.add_parser('frontier', help='Построить таблицу границы разделимости')
    frontier.add_argument('-o', '--output', type=str, help='Путь к CSV (по умолчанию: каталог кэша)')
    frontier.add_argument('--n-sim', type=int, default=FRONTIER_CONFIG['n_sim'], help='Размер выборок')
    frontier.add_argument('--reps', type=int, default=FRONTIER_CONFIG['reps'], help='Повторов на шаг')
    frontier.add_argument('--seed', type=int, default=FRONTIER_CONFIG['seed'], help='Зерно')
    frontier.add_argument('--gamma-grid', type=float, nargs='+', default=FRONTIER_CONFIG['gamma_grid'],
                          help='Возрастающая сетка γ')
    frontier.add_argument('--jobs', type=int, default=SLOE_CONFIG['loo_workers'], help='Число потоков')

    return parser


def emit(payload: Dict[str, Any], output: Optional[str] = None) -> None:
    """Печатает JSON в stdout или атомарно записывает его в файл."""
    text = to_json(payload)
    if output:
        atomic_write_text(output, text + "\n")
        logging.info(f"Отчет сохранен в {output}")
    else:
        print(text)


def _check_jobs(jobs: Optional[int]) -> None:
    if jobs is not None and jobs < 1:
        raise UsageError(f"--jobs должно быть >= 1, получено {jobs}")


def cmd_fit(args: argparse.Namespace) -> int:
    """Конвейер load_csv -> fit_mle -> η̂² -> solve_eta -> отчет."""
    if not (0.0 < args.level < 1.0):
        raise UsageError(f"--level должен лежать в (0, 1), получено {args.level}")
    if args.raw_scale and not args.standardize:
        raise UsageError("--raw-scale требует --standardize")
    _check_jobs(args.jobs)

    data = load_csv(args.csv, args.outcome, standardize=args.standardize)
    test_features = None
    if args.test_csv:
        rows = load_feature_rows(args.test_csv, data.names(), args.outcome)
        test_features = data.standardize_rows(rows)

    fit, signal, params, report = corrected_pipeline(
        data, args.level, covariance=args.covariance, test_features=test_features,
        method=EstimatorMethod(args.method), workers=args.jobs)

    payload: Dict[str, Any] = {
        'command': 'fit',
        'n': data.n,
        'd': data.d,
        'kappa': data.kappa,
        'eta_sq': signal.eta_sq,
        'alpha': params.alpha,
        'sigma_star': params.sigma_star,
        'lambda': params.lambda_,
        'gamma_sq': params.gamma_sq,
        'fit': {'converged': fit.converged, 'iterations': fit.iterations, 'grad_norm': fit.grad_norm,
                'loglik': fit.loglik},
        'signal': signal.to_dict(),
        'report': report.to_dict(),
    }
    if args.raw_scale:
        payload['report_raw'] = to_raw_scale(report, data).to_dict()
    if args.classical:
        payload['classical'] = classical_inference(fit, args.level, data.names(), test_features).to_dict()

    emit(with_metadata(payload, config=vars(args)), args.output)
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    """Решение системы состояния при заданных (κ, γ) или (κ, η)."""
    if args.order < 2:
        raise UsageError(f"--order должно быть >= 2, получено {args.order}")
    frontier = load_frontier(args.frontier) if args.frontier else None
    opts = SolverOptions(order=args.order, tol=args.tol, check_existence=not args.no_existence_check,
                         frontier=frontier, use_cache=SOLVER_CONFIG['cache_enabled'] and not args.no_cache)
    try:
        if args.gamma is not None:
            params = solve_gamma(args.kappa, args.gamma, opts)
        else:
            params = solve_eta(args.kappa, args.eta, opts)
    except ValueError as e:
        raise UsageError(str(e)) from e

    payload = {'command': 'solve', 'params': params.to_dict(), 'gamma': math.sqrt(params.gamma_sq),
               'eta': math.sqrt(params.eta_sq)}
    emit(with_metadata(payload, config=vars(args)))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    """Запуск эксперимента по конфигурации; результаты в JSON и CSV."""
    if args.create_config:
        atomic_write_text(args.create_config, to_json(sample_config(args.experiment)) + "\n")
        print(json.dumps({'created': args.create_config}, ensure_ascii=False))
        return EXIT_OK
    if not args.config:
        raise UsageError("Не указан путь к конфигурации эксперимента")
    _check_jobs(args.jobs)

    config = load_experiment_config(args.config)
    if args.jobs is not None:
        config.parallelism = args.jobs
    if args.seed is not None:
        config.seed = args.seed
    if args.plot_data:
        config.keep_raw = True

    result = run_experiment(config)
    prefix = args.output or f"{config.experiment}_results"
    json_path, csv_path = save_results(result, prefix)
    print_summary(result)

    dropped = sum(r.get('dropped_separable', 0) + r.get('dropped_solver', 0) for r in result.records)
    print(json.dumps({'experiment': config.experiment, 'json': json_path, 'csv': csv_path,
                      'records': len(result.records), 'dropped_reps': dropped}, ensure_ascii=False))
    return EXIT_OK


def cmd_frontier(args: argparse.Namespace) -> int:
    """Построение и сохранение таблицы границы κ★(γ)."""
    _check_jobs(args.jobs)
    try:
        table = build_frontier(args.gamma_grid, n_sim=args.n_sim, reps=args.reps, seed=args.seed,
                               workers=args.jobs)
    except ValueError as e:
        raise UsageError(str(e)) from e
    path = save_frontier(table, args.output or str(default_frontier_path()))
    payload = {'command': 'frontier', 'path': path, 'gamma': table.gamma, 'kappa_star': table.kappa_star,
               'n_sim': table.n_sim, 'reps': table.reps}
    emit(with_metadata(payload, seed=table.seed, config=vars(args)))
    return EXIT_OK


COMMANDS = {
    'fit': cmd_fit,
    'solve': cmd_solve,
    'simulate': cmd_simulate,
    'frontier': cmd_frontier,
}


def report_error(error: Exception, exit_code: int) -> int:
    """Пишет структурированную ошибку в stderr и возвращает код выхода."""
    message = SEPARABLE_MESSAGE if isinstance(error, SeparableData) else str(error)
    body = {
        'error': type(error).__name__,
        'message': message,
        'exit_code': exit_code,
    }
    if isinstance(error, SeparableData):
        body['detail'] = str(error)
    if isinstance(error, SloeError):
        body['diagnostics'] = error.diagnostics
    print(to_json(body), file=sys.stderr)
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """
    Основная функция программы.

    Args:
        argv: Аргументы командной строки (по умолчанию sys.argv[1:])

    Returns:
        Код выхода: 0 успех, 1 ошибка использования, 2 ошибка данных, 3 численная ошибка
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        return report_error(e, EXIT_USAGE)

    setup_logging(args.log_level, args.log_file)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        logging.error(f"Ошибка конфигурации: {e}")
        return report_error(e, EXIT_USAGE)
    except DataError as e:
        logging.error(f"Ошибка данных: {e}")
        return report_error(e, EXIT_DATA)
    except SloeError as e:
        logging.error(f"Численная ошибка: {e}")
        return report_error(e, EXIT_NUMERICAL)
    except Exception as e:
        logging.exception(f"Неожиданная ошибка: {e}")
        return report_error(e, EXIT_USAGE)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nПрограмма прервана пользователем.", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except Exception as e:
        logging.exception(f"Неожиданная ошибка: {e}")
        sys.exit(EXIT_USAGE)
