"""
Конечные цепи Маркова с непрерывным временем.

Генераторы собираются по правилам переходов над помеченными состояниями;
стационарное распределение считается методом GTH (исключение состояний
без вычитаний), что устойчиво при сильно различающихся интенсивностях.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from src.config import (
    BISECTION_TOL,
    CEIL_TOL,
    RATE_BRACKET_CAP,
    RATE_BRACKET_START,
    ROW_SUM_TOL,
    STATIONARY_TOL,
)
from src.validation import SolverError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Generator:
    """Плотная матрица интенсивностей Q с метками состояний."""

    Q: np.ndarray
    labels: tuple

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        n = len(self.labels)
        if Q.shape != (n, n):
            raise ValidationError(f"Генератор: размер {Q.shape} не согласован с числом меток {n}")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0.0):
            raise ValidationError("Генератор: внедиагональные интенсивности должны быть неотрицательны")
        scale = max(1.0, float(np.abs(Q).max())) if n else 1.0
        if n and np.abs(Q.sum(axis=1)).max() > ROW_SUM_TOL * scale:
            raise ValidationError("Генератор: суммы строк должны быть равны нулю")
        object.__setattr__(self, "Q", Q)

    @property
    def size(self):
        return len(self.labels)

    def index(self, label):
        return self.labels.index(label)

    def to_dict(self):
        return {"labels": [list(l) if isinstance(l, tuple) else l for l in self.labels], "Q": self.Q.tolist()}


@dataclass(frozen=True, eq=False)
class StationaryDist:
    """Стационарное распределение, согласованное с метками генератора."""

    pi: np.ndarray
    labels: tuple
    residual: float = 0.0

    def prob(self, label):
        return float(self.pi[self.labels.index(label)])


class GeneratorBuilder:
    """
    Сборщик генератора: интенсивности добавляются правилами src → dst,
    петли отбрасываются, диагональ равна минус сумме строки.
    """

    def __init__(self, labels):
        self.labels = tuple(labels)
        self._index = {label: i for i, label in enumerate(self.labels)}
        if len(self._index) != len(self.labels):
            raise ValidationError("Генератор: метки состояний должны быть уникальны")
        n = len(self.labels)
        self._Q = np.zeros((n, n))

    def __contains__(self, label):
        return label in self._index

    def add_rate(self, src, dst, rate):
        if rate == 0.0 or src == dst:
            return
        if rate < 0.0:
            raise ValidationError(f"Отрицательная интенсивность {rate} для перехода {src} → {dst}")
        self._Q[self._index[src], self._index[dst]] += rate

    def build(self):
        Q = self._Q.copy()
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return Generator(Q, self.labels)


def _gth(Q):
    """GTH-исключение для неприводимого генератора."""
    A = np.array(Q, dtype=float, copy=True)
    n = A.shape[0]
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0.0:
            raise SolverError(f"GTH: состояние {k} не имеет переходов в оставшиеся состояния")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


def recurrent_states(gen):
    """
    Индексы состояний единственного замкнутого класса.

    Raises:
        SolverError: Если замкнутых классов несколько
    """
    n = gen.size
    off = gen.Q.copy()
    np.fill_diagonal(off, 0.0)
    graph = csr_matrix(off > 0.0)
    n_comp, comp = connected_components(graph, directed=True, connection="strong")
    closed = np.ones(n_comp, dtype=bool)
    rows, cols = graph.nonzero()
    leaving = comp[rows] != comp[cols]
    closed[np.unique(comp[rows[leaving]])] = False
    closed_ids = np.flatnonzero(closed)
    if len(closed_ids) > 1:
        # недостижимые замкнутые классы (без входящих переходов) не участвуют
        entered = np.zeros(n_comp, dtype=bool)
        entered[np.unique(comp[cols[leaving]])] = True
        reachable = closed_ids[entered[closed_ids]]
        if len(reachable) == 1:
            closed_ids = reachable
    if len(closed_ids) != 1:
        classes = [[gen.labels[i] for i in np.flatnonzero(comp == c)][:5] for c in closed_ids]
        raise SolverError(f"Цепь приводима: {len(closed_ids)} возвратных классов, например {classes}")
    return np.flatnonzero(comp == closed_ids[0])


def stationary(gen):
    """
    Стационарное распределение πQ = 0, π1 = 1.

    Невозвратные состояния получают нулевую массу.

    Args:
        gen (Generator): Генератор цепи

    Returns:
        StationaryDist

    Raises:
        SolverError: Если цепь имеет несколько возвратных классов
    """
    n = gen.size
    if n == 1:
        return StationaryDist(np.ones(1), gen.labels, 0.0)
    idx = recurrent_states(gen)
    pi = np.zeros(n)
    if len(idx) == 1:
        pi[idx[0]] = 1.0
    else:
        pi[idx] = _gth(gen.Q[np.ix_(idx, idx)])

    residual = float(np.abs(pi @ gen.Q).max())
    scale = max(1.0, float(np.abs(gen.Q).max()))
    if residual > STATIONARY_TOL * scale:
        logger.warning("Невязка стационарного решения %.3e превышает допуск (n=%d)", residual, n)
    return StationaryDist(pi, gen.labels, residual)


def marginal(dist, key, size=None):
    """
    Суммирует π по классам эквивалентности меток.

    Args:
        dist (StationaryDist): Распределение
        key (callable): Отображение метки в целый индекс класса
        size (int, optional): Длина результата

    Returns:
        np.ndarray: вероятностный вектор
    """
    keys = np.fromiter((key(label) for label in dist.labels), dtype=int, count=len(dist.labels))
    length = size if size is not None else int(keys.max()) + 1
    return np.bincount(keys, weights=dist.pi, minlength=length)[:length]


def bisect_monotone(f, target, lo, hi, tol=BISECTION_TOL, max_iter=200):
    """
    Бисекция для монотонной функции: ищет x с f(x) = target.

    Args:
        f (callable): Монотонная функция
        target (float): Целевое значение
        lo (float): Левая граница
        hi (float): Правая граница
        tol (float): Допуск по значению функции

    Returns:
        float

    Raises:
        SolverError: Если target не лежит между f(lo) и f(hi)
    """
    f_lo = f(lo)
    f_hi = f(hi)
    if abs(f_lo - target) <= tol:
        return lo
    if abs(f_hi - target) <= tol:
        return hi
    if (f_lo - target) * (f_hi - target) > 0.0:
        raise SolverError(
            f"Бисекция: цель {target:.12g} вне интервала значений [{f_lo:.12g}, {f_hi:.12g}] на [{lo}, {hi}]"
        )

    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        logger.debug("bisect it=%d x=%.15g f=%.15g", it, mid, f_mid)
        if abs(f_mid - target) <= tol:
            return mid
        if (f_mid - target) * (f_lo - target) > 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def bracket_rate(f, target, start=RATE_BRACKET_START, cap=RATE_BRACKET_CAP):
    """
    Верхняя граница для бисекции по интенсивности: удваивает x, пока
    f(x) не пересечет target (относительно f(0)).

    Raises:
        SolverError: Если граница превысила cap
    """
    side = f(0.0) > target
    x = start
    while x <= cap:
        value = f(x)
        if (value > target) != side or value == target:
            return x
        x *= 2.0
    raise SolverError(f"Не удалось найти верхнюю границу интенсивности до {cap:g}")


def ceil_tol(x, tol=CEIL_TOL):
    """Округление вверх с прижатием почти целых значений."""
    return math.ceil(x - tol)


def floor_tol(x, tol=CEIL_TOL):
    """Округление вниз с прижатием почти целых значений."""
    return math.floor(x + tol)
