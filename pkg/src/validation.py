"""
Модуль валидации входных данных и исключений расчетных модулей.
"""
import math


class ValidationError(Exception):
    """Исключение для ошибок валидации."""
    pass


class SolverError(Exception):
    """Исключение для численных ошибок (бисекция, вырожденные цепи, решение СЛАУ)."""
    pass


def validate_positive(value, name, min_value=0.0, max_value=None):
    """
    Проверяет, что значение больше min_value и не превышает max_value.

    Args:
        value (float): Проверяемое значение
        name (str): Название параметра для сообщения об ошибке
        min_value (float): Нижняя граница (строгая)
        max_value (float, optional): Верхняя граница (нестрогая)

    Raises:
        ValidationError: Если значение не проходит валидацию
    """
    if value is None:
        raise ValidationError(f"{name}: значение не может быть пустым")

    if isinstance(value, float) and math.isnan(value):
        raise ValidationError(f"{name}: значение не является числом")

    if value <= min_value:
        raise ValidationError(f"{name}: значение должно быть больше {min_value}, получено {value}")

    if max_value is not None and value > max_value:
        raise ValidationError(f"{name}: значение должно быть меньше {max_value}, получено {value}")


def validate_probability(value, name, allow_zero=True, allow_one=True):
    """
    Проверяет, что значение является вероятностью.

    Args:
        value (float): Проверяемое значение
        name (str): Название параметра
        allow_zero (bool): Допускается ли 0
        allow_one (bool): Допускается ли 1

    Raises:
        ValidationError: Если значение вне [0, 1] (с учетом флагов)
    """
    if value is None:
        raise ValidationError(f"{name}: значение не может быть пустым")
    if isinstance(value, float) and math.isnan(value):
        raise ValidationError(f"{name}: значение не является числом")

    lo_ok = value >= 0.0 if allow_zero else value > 0.0
    hi_ok = value <= 1.0 if allow_one else value < 1.0
    if not (lo_ok and hi_ok):
        left = "[" if allow_zero else "("
        right = "]" if allow_one else ")"
        raise ValidationError(f"{name}: значение должно лежать в {left}0, 1{right}, получено {value}")


def validate_load(lam, allow_zero=True):
    """
    Валидация нагрузки на сервер λ: λ ∈ [0, 1).

    Raises:
        ValidationError: Если нагрузка вне допустимого диапазона
    """
    if lam is None:
        raise ValidationError("Нагрузка λ: значение не может быть пустым")
    if lam < 0.0 or lam >= 1.0 or (not allow_zero and lam == 0.0) or math.isnan(lam):
        lower = "[0" if allow_zero else "(0"
        raise ValidationError(f"Нагрузка λ должна лежать в {lower}, 1), получено {lam}")


def validate_rate(value, name):
    """Интенсивность: строго положительное конечное число."""
    validate_positive(value, name, min_value=0.0)
    if math.isinf(value):
        raise ValidationError(f"{name}: значение должно быть конечным")


def validate_integer(value, name, min_value=0):
    """
    Проверяет, что значение целое и не меньше min_value.

    Raises:
        ValidationError: Если значение не целое или слишком мало
    """
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name}: ожидается целое число, получено {value!r}")
    if value < min_value:
        raise ValidationError(f"{name}: значение должно быть не меньше {min_value}, получено {value}")


def validate_push_params(lam, delta):
    """Параметры политики push: λ ∈ [0,1), δ > 0."""
    validate_load(lam)
    validate_rate(delta, "Интенсивность опроса δ")


def validate_pull_params(lam, delta0, delta1):
    """
    Параметры политики pull.

    Args:
        lam (float): Нагрузка λ
        delta0 (float): Интенсивность обновлений простаивающего сервера δ₀
        delta1 (float): Вероятность обновления при завершении задания δ₁

    Raises:
        ValidationError: Если параметры некорректны
    """
    validate_load(lam)
    validate_probability(delta1, "Вероятность обновления δ₁")
    if delta0 is None or delta0 < 0.0 or math.isnan(delta0) or math.isinf(delta0):
        raise ValidationError(f"Интенсивность δ₀ должна быть неотрицательной, получено {delta0}")
    if lam * delta1 + (1.0 - lam) * delta0 <= 0.0:
        raise ValidationError("Суммарная интенсивность обновлений δ = λδ₁ + (1−λ)δ₀ должна быть положительной")


def validate_pooling_params(lam, p):
    """Параметры объединения ресурсов: λ ∈ [0,1), p ∈ [0,1)."""
    validate_load(lam)
    validate_probability(p, "Доля центрального сервера p", allow_one=False)


def validate_waterfill_geometry(n_servers, batch_size, sample_size):
    """
    Валидация геометрии water filling в симуляции.

    Args:
        n_servers (int): Число серверов N
        batch_size (int): Размер пакета M
        sample_size (int): Число опрашиваемых серверов d

    Raises:
        ValidationError: Если d > N или M, d < 1
    """
    validate_integer(n_servers, "Число серверов N", min_value=1)
    validate_integer(batch_size, "Размер пакета M", min_value=1)
    validate_integer(sample_size, "Число опрашиваемых серверов d", min_value=1)
    if sample_size > n_servers:
        raise ValidationError(
            f"Число опрашиваемых серверов d={sample_size} превышает число серверов N={n_servers}"
        )


def validate_sim_inputs(policy, n_servers, runs, warmup_fraction, arrivals_total):
    """
    Комплексная валидация параметров симуляции.

    Raises:
        ValidationError: Если любые данные некорректны

    Returns:
        bool: True если все валидации пройдены
    """
    try:
        if policy not in ("push", "pull", "waterfill", "pooling"):
            raise ValidationError(f"Неизвестная политика: {policy}")
        validate_integer(n_servers, "Число серверов N", min_value=1)
        validate_integer(runs, "Число прогонов", min_value=1)
        validate_integer(arrivals_total, "Число поступлений", min_value=0)
        if not 0.0 <= warmup_fraction < 1.0:
            raise ValidationError(f"Доля разогрева должна лежать в [0, 1), получено {warmup_fraction}")
        return True

    except ValidationError:
        raise
    except Exception as e:
        raise ValidationError(f"Ошибка валидации: {str(e)}")
