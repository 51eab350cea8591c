# export_utils.py
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import pandas as pd

from config import REPORT_CONFIG
from models import ExperimentResult, _jsonable

logger = logging.getLogger(__name__)

# Столбцы, которые всегда идут первыми в tidy CSV
LEADING_COLUMNS = ('experiment', 'n', 'd', 'kappa', 'gamma_sq', 'method', 'q')


def atomic_write_text(path: str, text: str) -> str:
    """
    Записывает текст во временный файл рядом с path и переименовывает его.

    Читатель никогда не увидит частично записанный файл.

    Args:
        path: Путь к файлу
        text: Содержимое

    Returns:
        Путь к записанному файлу
    """
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(f".{target.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            tmp.unlink()
    return str(target)


def with_metadata(payload: Dict[str, Any], seed: Optional[int] = None,
                  config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Добавляет к отчету версию схемы, версию сборки, зерно и разрешенную конфигурацию."""
    envelope = {
        'schema_version': REPORT_CONFIG['schema_version'],
        'build_version': REPORT_CONFIG['build_version'],
        'seed': seed,
        'config': config or {},
    }
    envelope.update(payload)
    return _jsonable(envelope)


def to_json(payload: Dict[str, Any]) -> str:
    return json.dumps(_jsonable(payload), ensure_ascii=False, indent=2, allow_nan=False, default=repr)


def records_frame(records: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    """
    Строит tidy-таблицу: одна строка на точку сетки и метод.

    Args:
        records: Записи эксперимента

    Returns:
        DataFrame с ключевыми столбцами в начале
    """
    frame = pd.DataFrame([_jsonable(r) for r in records])
    if frame.empty:
        return frame
    leading = [c for c in LEADING_COLUMNS if c in frame.columns]
    rest = [c for c in frame.columns if c not in leading]
    return frame[leading + rest]


def drop_columns(frame: pd.DataFrame, columns: Iterable[str]) -> pd.DataFrame:
    """Копия таблицы без указанных столбцов (например, зависящих от часов)."""
    return frame.drop(columns=[c for c in columns if c in frame.columns])


def save_results(result: ExperimentResult, output_prefix: str,
                 metadata: Optional[Dict[str, Any]] = None) -> Tuple[str, str]:
    """
    Сохраняет результат эксперимента в JSON и tidy CSV.

    Args:
        result: Результат эксперимента
        output_prefix: Путь без расширения; создаются <prefix>.json и <prefix>.csv
        metadata: Дополнительные поля верхнего уровня JSON

    Returns:
        Кортеж (путь к JSON, путь к CSV)
    """
    payload = with_metadata(result.to_dict(), seed=result.config.get('seed'), config=result.config)
    payload.update(_jsonable(metadata or {}))

    json_path = atomic_write_text(f"{output_prefix}.json", to_json(payload) + "\n")
    frame = records_frame(result.records)
    csv_path = atomic_write_text(f"{output_prefix}.csv", frame.to_csv(index=False, float_format='%.10g'))

    logger.info(f"Результаты сохранены в {json_path} и {csv_path} ({len(frame)} строк)")
    return json_path, csv_path


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            return '-'
        return f"{value:.4g}"
    return str(value)


def format_summary_table(records: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    """
    Форматирует записи в таблицу фиксированной ширины.

    Args:
        records: Записи эксперимента
        columns: Выводимые столбцы (отсутствующие пропускаются)

    Returns:
        Многострочная строка
    """
    present = [c for c in columns if any(c in r for r in records)]
    if not present:
        return "(нет данных)"
    cells: List[List[str]] = [[_format_cell(r.get(c, '')) for c in present] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(present)]

    lines = [" ".join(c.ljust(w) for c, w in zip(present, widths)), "-" * (sum(widths) + len(widths) - 1)]
    lines.extend(" ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells)
    return "\n".join(lines)


SUMMARY_COLUMNS = {
    'coverage': ('kappa', 'gamma_sq', 'method', 'coverage', 'coverage_se', 'mean_ci_width',
                 'reps_used', 'dropped_separable', 'dropped_solver'),
    'bootstrap': ('kappa', 'gamma_sq', 'method', 'coverage', 'coverage_se', 'mean_ci_width',
                  'reps_used', 'bootstrap_dropped_replicates'),
    'null_pvalues': ('kappa', 'gamma_sq', 'method', 'n_pvalues', 'ks_statistic', 'ks_pvalue', 'reps_used'),
    'sloe_convergence': ('n', 'kappa', 'gamma_sq', 'mean_sloe_vs_truth', 'mean_quad_vs_truth',
                         'mean_sloe_vs_quad', 'reps_used'),
    'runtime': ('n', 'kappa', 'method', 'median_seconds', 'mean_seconds', 'reps_used'),
    'fdr': ('kappa', 'gamma_sq', 'method', 'q', 'fdp_mean', 'fdp_se', 'power', 'reps_used'),
}


def print_summary(result: ExperimentResult, stream: TextIO = sys.stderr) -> None:
    """Печатает сводную таблицу эксперимента (по умолчанию в stderr)."""
    columns = SUMMARY_COLUMNS.get(result.experiment, tuple(LEADING_COLUMNS))
    print(f"Эксперимент: {result.experiment}", file=stream)
    print("=" * 50, file=stream)
    print(format_summary_table(result.records, columns), file=stream)
