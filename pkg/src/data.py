# Эталонные настройки таблиц относительной ошибки симуляции.
# Формат строки: распределение (строка для PhaseType.from_spec), нагрузка λ,
# параметр политики (δ или p), для water filling константа C,
# значение E[R] при N → ∞ и относительная ошибка (%) при N = 10⁴.

from src.validation import ValidationError

# Таблица 1: push
PUSH_ROWS = [
    {"ph": "exponential", "lam": 0.90, "delta": 0.30, "limit": 6.0081, "ref_rel_err": 0.0288},
    {"ph": "hyperexp:15,0.5", "lam": 0.85, "delta": 0.50, "limit": 4.5862, "ref_rel_err": 0.0314},
    {"ph": "erlang:6", "lam": 0.80, "delta": 0.25, "limit": 4.2206, "ref_rel_err": 0.1251},
    {"ph": "hypererlang:2,5,0.25", "lam": 0.85, "delta": 0.15, "limit": 8.7304, "ref_rel_err": 0.3923},
]

# Таблица 2: water filling, размер пакета M = C·log₁₀N
WATERFILL_ROWS = [
    {"ph": "exponential", "lam": 0.80, "delta": 0.40, "C": 20, "limit": 3.5136, "ref_rel_err": 0.8812},
    {"ph": "hyperexp:10,0.5", "lam": 0.80, "delta": 0.40, "C": 40, "limit": 4.5947, "ref_rel_err": 1.3775},
    {"ph": "erlang:3", "lam": 0.75, "delta": 1.20, "C": 30, "limit": 1.4968, "ref_rel_err": 0.0502},
    {"ph": "hypererlang:3,5,0.6", "lam": 0.80, "delta": 1.20, "C": 30, "limit": 1.5708, "ref_rel_err": 1.7696},
]

# Таблица 3: pull без обновлений при завершении (δ₁ = 0)
PULL_ROWS = [
    {"ph": "exponential", "lam": 0.70, "delta": 0.20, "limit": 2.0816, "ref_rel_err": 0.0654},
    {"ph": "hyperexp:20,0.5", "lam": 0.90, "delta": 0.40, "limit": 1.8726, "ref_rel_err": 0.9965},
    {"ph": "erlang:3", "lam": 0.75, "delta": 0.15, "limit": 3.0000, "ref_rel_err": 4.2689},
    {"ph": "hypererlang:2,5,0.75", "lam": 0.75, "delta": 0.50, "limit": 1.1839, "ref_rel_err": 0.0536},
]

# Таблица 4: объединение ресурсов
POOLING_ROWS = [
    {"ph": "exponential", "lam": 0.80, "p": 0.30, "limit": 1.3958, "ref_rel_err": 0.1325},
    {"ph": "hyperexp:5,0.5", "lam": 0.70, "p": 0.30, "limit": 1.0699, "ref_rel_err": 0.0252},
    {"ph": "erlang:7", "lam": 0.90, "p": 0.50, "limit": 1.2588, "ref_rel_err": 0.0112},
    {"ph": "hypererlang:3,5,0.6", "lam": 0.80, "p": 0.10, "limit": 2.0320, "ref_rel_err": 0.0134},
]

TABLE_SETTINGS = {
    1: {"policy": "push", "title": "Относительная ошибка симуляции: push", "rows": PUSH_ROWS},
    2: {"policy": "waterfill", "title": "Относительная ошибка симуляции: water filling", "rows": WATERFILL_ROWS},
    3: {"policy": "pull", "title": "Относительная ошибка симуляции: pull (δ₁ = 0)", "rows": PULL_ROWS},
    4: {"policy": "pooling", "title": "Относительная ошибка симуляции: объединение ресурсов", "rows": POOLING_ROWS},
}


def get_table_settings(number):
    """Возвращает настройки таблицы по номеру 1..4."""
    try:
        return TABLE_SETTINGS[int(number)]
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"Номер таблицы должен быть 1, 2, 3 или 4, получено {number}")
