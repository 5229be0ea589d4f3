"""
Общие фикстуры для тестов.
"""
import pytest
import sys
from pathlib import Path

# Добавляем корневую директорию проекта в PYTHONPATH
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.phase_type import (  # noqa: E402
    make_erlang,
    make_exponential,
    make_hyper_erlang,
    make_hyperexp,
    make_z_epsilon,
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="запускать длительные симуляции")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: длительная симуляция (запуск с --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="нужен флаг --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def exp_ph():
    """Экспоненциальное распределение со средним 1."""
    return make_exponential()


@pytest.fixture
def erlang3_ph():
    """Эрланг порядка 3."""
    return make_erlang(3)


@pytest.fixture
def hyperexp10_ph():
    """Гиперэкспоненциальное распределение, SCV = 10, f = 1/2."""
    return make_hyperexp(10.0, 0.5)


@pytest.fixture
def catalog():
    """Набор распределений всех конструкторов."""
    return [
        make_exponential(),
        make_erlang(3),
        make_hyperexp(10.0, 0.5),
        make_hyper_erlang(2, 5, 0.25),
        make_z_epsilon(0.1),
    ]


@pytest.fixture
def single_worker(monkeypatch):
    """Прогоны симуляции в одном процессе."""
    monkeypatch.setenv("CAVITY_LB_THREADS", "1")
