import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models import Dataset, FrontierProvenance, FrontierTable  # noqa: E402
import probe_frontier  # noqa: E402

# Грубая таблица границы для тестов: построение настоящей занимает минуты
TEST_FRONTIER = FrontierTable(
    gamma=np.array([0.05, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 10.0]),
    kappa_star=np.array([0.499, 0.47, 0.43, 0.39, 0.35, 0.28, 0.19, 0.12, 0.10]),
    provenance=FrontierProvenance.USER_SUPPLIED,
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="запускать медленные проверки Монте-Карло")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: медленная проверка Монте-Карло (нужен --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="нужен --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fixed_frontier():
    probe_frontier.set_default_frontier(TEST_FRONTIER)
    yield TEST_FRONTIER
    probe_frontier.set_default_frontier(None)


@pytest.fixture
def frontier_table():
    return TEST_FRONTIER


@pytest.fixture
def four_point_data():
    """d=1, β̂=0, стандартная ошибка ровно 1."""
    return Dataset(features=np.array([[1.0], [1.0], [-1.0], [-1.0]]), outcomes=np.array([1.0, 0.0, 1.0, 0.0]))


def write_csv(path: Path, header, rows) -> str:
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
