"""
Фазовые (PH) распределения длительности заданий.

PH-распределение задается начальным вектором α и субгенератором S;
s* = −S·1 — интенсивности поглощения. Все конструкторы нормируют
среднее к единице.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from src.config import UNIT_MEAN_TOL
from src.validation import SolverError, ValidationError, validate_integer, validate_positive

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PhaseType:
    """PH-распределение (α, S)."""

    alpha: np.ndarray
    S: np.ndarray
    label: str = "PH"

    def __post_init__(self):
        alpha = np.atleast_1d(np.array(self.alpha, dtype=float))
        S = np.atleast_2d(np.array(self.S, dtype=float))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "S", S)
        _check_representation(alpha, S)
        alpha.setflags(write=False)
        S.setflags(write=False)

    @property
    def n_s(self):
        return self.alpha.shape[0]

    @property
    def s_star(self):
        return -self.S.sum(axis=1)

    def describe(self):
        return self.label

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "S": self.S.tolist()}

    @classmethod
    def from_dict(cls, data, label="PH"):
        try:
            return cls(np.asarray(data["alpha"], dtype=float), np.asarray(data["S"], dtype=float), label)
        except KeyError as e:
            raise ValidationError(f"PH-распределение: отсутствует поле {e}")

    @classmethod
    def from_config(cls, config):
        """
        Строит распределение по словарю вида {"kind": "hyperexp", "scv": 10, "f": 0.5}.

        Args:
            config (dict): Описание распределения

        Returns:
            PhaseType
        """
        kind = config.get("kind")
        if kind == "exponential":
            return make_exponential()
        if kind == "erlang":
            return make_erlang(int(config["k"]))
        if kind == "hyperexp":
            return make_hyperexp(float(config["scv"]), float(config.get("f", 0.5)))
        if kind == "hypererlang":
            return make_hyper_erlang(int(config["k"]), int(config["l"]), float(config["p"]))
        if kind == "zeps":
            return make_z_epsilon(float(config["eps"]))
        if kind is None and "alpha" in config:
            return cls.from_dict(config)
        raise ValidationError(f"Неизвестный тип распределения: {kind}")

    @classmethod
    def from_spec(cls, text):
        """
        Разбор строки вида `exponential`, `erlang:3`, `hyperexp:10,0.5`,
        `hypererlang:2,5,0.25`, `zeps:0.01` или `file:<путь к JSON>`.
        """
        text = text.strip()
        name, _, rest = text.partition(":")
        name = name.lower()
        try:
            if name == "file":
                with open(Path(rest), encoding="utf-8") as fh:
                    return cls.from_dict(json.load(fh), label=Path(rest).stem)
            args = [a for a in rest.split(",") if a.strip()] if rest else []
            if name == "exponential" and not args:
                return make_exponential()
            if name == "erlang" and len(args) == 1:
                return make_erlang(int(args[0]))
            if name == "hyperexp" and len(args) in (1, 2):
                f = float(args[1]) if len(args) == 2 else 0.5
                return make_hyperexp(float(args[0]), f)
            if name == "hypererlang" and len(args) == 3:
                return make_hyper_erlang(int(args[0]), int(args[1]), float(args[2]))
            if name == "zeps" and len(args) == 1:
                return make_z_epsilon(float(args[0]))
        except (ValueError, OSError) as e:
            raise ValidationError(f"Некорректное описание распределения {text!r}: {e}")
        raise ValidationError(f"Некорректное описание распределения: {text!r}")


@dataclass(frozen=True)
class TimerStats:
    """Статистики гонки задания с экспоненциальным таймером интенсивности δ."""

    delta: float
    y: float
    alpha_prime: np.ndarray
    excess: float


def _check_representation(alpha, S):
    n = alpha.shape[0]
    if n == 0:
        raise ValidationError("PH-распределение: пустой вектор α")
    if S.shape != (n, n):
        raise ValidationError(f"PH-распределение: размер S {S.shape} не согласован с α ({n})")
    if not np.all(np.isfinite(alpha)) or not np.all(np.isfinite(S)):
        raise ValidationError("PH-распределение: элементы должны быть конечными")
    if np.any(alpha < 0.0) or abs(alpha.sum() - 1.0) > 1e-12:
        raise ValidationError("PH-распределение: α должен быть вероятностным вектором")
    off = S - np.diag(np.diag(S))
    if np.any(off < 0.0):
        raise ValidationError("PH-распределение: внедиагональные элементы S должны быть неотрицательны")
    if np.any(np.diag(S) >= 0.0):
        raise ValidationError("PH-распределение: диагональ S должна быть отрицательной")
    scale = max(1.0, float(np.abs(S).max()))
    if np.any(S.sum(axis=1) > 1e-12 * scale):
        raise ValidationError("PH-распределение: суммы строк S должны быть неположительны")
    try:
        x = linalg.solve(S, -np.ones(n))
    except linalg.LinAlgError:
        raise ValidationError("PH-распределение: матрица S вырождена")
    if not np.all(np.isfinite(x)):
        raise ValidationError("PH-распределение: матрица S вырождена")


def make_exponential():
    """Экспоненциальное распределение со средним 1."""
    return PhaseType(np.array([1.0]), np.array([[-1.0]]), "Exp")


def make_erlang(k):
    """
    Распределение Эрланга порядка k со средним 1.

    Args:
        k (int): Число фаз

    Returns:
        PhaseType
    """
    validate_integer(k, "Порядок Эрланга k", min_value=1)
    S = -k * np.eye(k) + k * np.eye(k, k=1)
    alpha = np.zeros(k)
    alpha[0] = 1.0
    return PhaseType(alpha, S, "Exp" if k == 1 else f"Erlang({k})")


def make_deterministic_proxy(k=256):
    """Эрланг большого порядка как приближение детерминированного задания."""
    return make_erlang(k)


def make_hyperexp(scv, f=0.5):
    """
    Гиперэкспоненциальное распределение второго порядка.

    f — доля работы, приходящаяся на первую фазу: p₁/μ₁ = f, p₂/μ₂ = 1−f;
    среднее 1, второй момент scv+1.

    Args:
        scv (float): Квадрат коэффициента вариации, scv ≥ 1
        f (float): Доля работы первой фазы, f ∈ (0,1)

    Returns:
        PhaseType

    Raises:
        ValidationError: Если scv < 1 или решение не существует
    """
    if scv is None or scv < 1.0:
        raise ValidationError(f"SCV гиперэкспоненциального распределения должен быть ≥ 1, получено {scv}")
    if not 0.0 < f < 1.0:
        raise ValidationError(f"Доля работы f должна лежать в (0, 1), получено {f}")

    disc = (scv - 1.0) * (scv - 1.0 + 8.0 * f * (1.0 - f))
    mu1 = (scv + 4.0 * f - 1.0 + math.sqrt(disc)) / (2.0 * f * (scv + 1.0))
    p1 = f * mu1
    p2 = 1.0 - p1
    if not (0.0 < p1 <= 1.0) or p2 < 0.0:
        raise ValidationError(f"Нет решения с положительными интенсивностями для scv={scv}, f={f}")
    if p2 == 0.0:
        return make_exponential()
    mu2 = p2 / (1.0 - f)
    label = f"HExp(SCV={scv:g}, f={f:g})"
    return PhaseType(np.array([p1, p2]), np.diag([-mu1, -mu2]), label)


def make_hyper_erlang(k, l, p):
    """
    Смесь Эрланга(k) и Эрланга(l), каждая ветвь со средним 1.

    Args:
        k (int): Порядок первой ветви
        l (int): Порядок второй ветви
        p (float): Вероятность первой ветви

    Returns:
        PhaseType
    """
    validate_integer(k, "Порядок первой ветви k", min_value=1)
    validate_integer(l, "Порядок второй ветви l", min_value=1)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"Вероятность ветви p должна лежать в [0, 1], получено {p}")
    first = make_erlang(k)
    second = make_erlang(l)
    S = np.block([
        [first.S, np.zeros((k, l))],
        [np.zeros((l, k)), second.S],
    ])
    alpha = np.zeros(k + l)
    alpha[0] = p
    alpha[k] = 1.0 - p
    return PhaseType(alpha, S, f"HErlang({k},{l}; p={p:g})")


def make_z_epsilon(eps):
    """
    Гиперэкспоненциальное Z(ε): p₁=1−ε, p₂=ε, μ₁=(1−ε)/ε, μ₂=ε/(1−ε).

    При ε → 0 вероятность завершения задания раньше таймера стремится к 1.
    """
    if eps is None or not 0.0 < eps <= 0.5:
        raise ValidationError(f"Параметр ε должен лежать в (0, 1/2], получено {eps}")
    mu1 = (1.0 - eps) / eps
    mu2 = eps / (1.0 - eps)
    return PhaseType(np.array([1.0 - eps, eps]), np.diag([-mu1, -mu2]), f"Z({eps:g})")


def moments(ph):
    """
    Среднее и квадрат коэффициента вариации.

    Returns:
        tuple: (mean, scv)
    """
    ones = np.ones(ph.n_s)
    x1 = linalg.solve(-ph.S, ones)
    x2 = linalg.solve(-ph.S, x1)
    mean = float(ph.alpha @ x1)
    second = 2.0 * float(ph.alpha @ x2)
    return mean, second / mean ** 2 - 1.0


def require_unit_mean(ph):
    """Решатели политик предполагают среднее длительности задания, равное 1."""
    mean, _ = moments(ph)
    if abs(mean - 1.0) > UNIT_MEAN_TOL:
        raise ValidationError(f"Среднее длительности задания должно быть равно 1, получено {mean:.9g}")


def timer_stats(ph, delta):
    """
    Гонка задания с экспоненциальным таймером интенсивности δ.

    y — вероятность завершить задание раньше таймера; α′ — распределение
    фазы в момент срабатывания таймера; excess — средний остаток работы
    при срабатывании таймера.

    Args:
        ph (PhaseType): Распределение длительности
        delta (float): Интенсивность таймера

    Returns:
        TimerStats
    """
    validate_positive(delta, "Интенсивность таймера δ")
    n = ph.n_s
    M = delta * np.eye(n) - ph.S
    try:
        # v = α(δI − S)⁻¹
        v = linalg.solve(M.T, ph.alpha)
        residual = linalg.solve(-ph.S, np.ones(n))
    except linalg.LinAlgError as e:
        raise SolverError(f"Не удалось решить систему для δ={delta}: {e}")

    y = float(v @ ph.s_star)
    mass = float(v.sum())
    alpha_prime = v / mass
    excess = float(alpha_prime @ residual)
    y = min(max(y, 0.0), 1.0)
    return TimerStats(delta=float(delta), y=y, alpha_prime=alpha_prime, excess=excess)


def timer_y_alternative(ph, delta):
    """y через 1 − δ·α(δI−S)⁻¹·1; используется для перекрестной проверки."""
    n = ph.n_s
    v = linalg.solve((delta * np.eye(n) - ph.S).T, ph.alpha)
    return 1.0 - delta * float(v.sum())
