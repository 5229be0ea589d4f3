"""
Константы и настройки по умолчанию.

Переменная окружения CAVITY_LB_THREADS ограничивает число процессов
при параллельных прогонах симуляции.
"""
import os

from src.validation import ValidationError

# Численные допуски
STATIONARY_TOL = 1e-9
ROW_SUM_TOL = 1e-10
BISECTION_TOL = 1e-10
SOLVER_TOL = 1e-13
INTEGER_SNAP_TOL = 1e-12
CEIL_TOL = 1e-9
UNIT_MEAN_TOL = 1e-6
RATE_BRACKET_START = 1.0
RATE_BRACKET_CAP = 1e12
CROSS_CHECK_TOL = 1e-8

# Симуляция
DEFAULT_RUNS = 20
DEFAULT_WARMUP = 0.10
DEFAULT_ARRIVALS_PER_SERVER = 10_000
DEFAULT_SEED = 2024
DESK_N_GRID = (100, 1_000, 10_000)
FULL_N_GRID = (100, 1_000, 10_000, 100_000)

# Вывод
TABLE_DECIMALS = 4

THREADS_ENV = "CAVITY_LB_THREADS"


def worker_count():
    """
    Число процессов для параллельных прогонов.

    Returns:
        int: значение CAVITY_LB_THREADS или число ядер

    Raises:
        ValidationError: Если переменная задана некорректно
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV}: ожидается целое число, получено {raw!r}")
    if value < 1:
        raise ValidationError(f"{THREADS_ENV}: значение должно быть не меньше 1, получено {value}")
    return value
