import os
from pathlib import Path
from dotenv import load_dotenv
import logging

# Настройка логирования
logger = logging.getLogger(__name__)

# Загрузка переменных окружения
load_dotenv()

# Каталог кэша (решения системы состояния и таблица границы)
CACHE_DIR = Path(os.environ.get("SLOE_CACHE_DIR", Path.home() / ".cache" / "sloe_inference"))

# Явный путь к таблице границы разделимости (если задан)
FRONTIER_PATH = os.environ.get("SLOE_FRONTIER_PATH")

LOG_LEVEL = os.environ.get("SLOE_LOG_LEVEL", "INFO")

try:
    DEFAULT_JOBS = max(1, int(os.environ.get("SLOE_JOBS", "1")))
except ValueError:
    logger.warning("SLOE_JOBS не является целым числом. Используется 1 поток.")
    DEFAULT_JOBS = 1

# Настройки метода Ньютона для ОМП
FIT_CONFIG = {
    'tol': 1e-8,  # по бесконечной норме градиента
    'max_iter': 100,
    'max_halvings': 30,
    'divergence_norm': 1e3,  # порог ‖β̂‖, после которого проверяем разделимость
    'separability_tol': 1e-7,
    'saturation_logit': 15.0,  # сошедшийся Ньютон с |t_i| выше порога проверяется на разделимость
}

# Настройки оценщика SLOE и точного LOO
SLOE_CONFIG = {
    'leverage_eps': 1e-12,
    'loo_workers': DEFAULT_JOBS,
}

# Настройки решателя уравнений состояния
SOLVER_CONFIG = {
    'order': 60,  # узлов Гаусса-Эрмита на ось
    'tol': 1e-9,  # по max-норме невязок
    'prox_tol': 1e-12,
    'prox_max_iter': 100,
    'max_iter': 200,
    'continuation_steps': 12,
    'existence_margin': 0.02,
    'cache_enabled': os.environ.get("SLOE_CACHE", "1") != "0",
}

# Настройки построения таблицы границы κ★(γ)
FRONTIER_CONFIG = {
    'gamma_grid': [0.05, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0],
    'n_sim': 200,
    'reps': 16,
    'bisection_steps': 10,
    'kappa_bracket': (0.005, 0.7),
    'threshold': 0.5,  # доля разделимых выборок на границе
    'subsample_reps': 11,
    'seed': 20210601,
    'version': 1,
}

# Настройки симуляций
SIMULATION_DEFAULTS = {
    'test_size_cap': 1000,
    'bootstrap_b': 200,
    'separable_stop_fraction': 0.10,
    'jobs': DEFAULT_JOBS,
    'level': 0.9,
}

# Версии формата отчетов
REPORT_CONFIG = {
    'schema_version': '1.0',
    'build_version': '0.3.0',
}
