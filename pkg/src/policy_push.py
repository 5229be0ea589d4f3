"""
Политика push с ограниченной длиной очереди: анализ очереди в полости.

Диспетчер хранит оценки длин очередей (верхние границы), опрашивает
случайный сервер с интенсивностью δN и назначает задания серверу с
минимальной оценкой. Очередь в полости описывается цепью на состояниях
(q, e, j): фактическая длина q, оценка e ∈ {m, m+1}, фаза j.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.config import INTEGER_SNAP_TOL, SOLVER_TOL
from src.ctmc import (
    GeneratorBuilder,
    bisect_monotone,
    bracket_rate,
    ceil_tol,
    marginal,
    stationary,
)
from src.phase_type import require_unit_mean, timer_stats
from src.validation import ValidationError, validate_push_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PushParams:
    """Параметры push: нагрузка λ и интенсивность опроса δ на сервер."""

    lam: float
    delta: float

    def __post_init__(self):
        validate_push_params(self.lam, self.delta)


@dataclass(frozen=True, eq=False)
class PushSolution:
    """Неподвижная точка (m, ν) и характеристики очереди в полости."""

    params: PushParams
    m: int
    m_tilde: float
    nu: float
    dist: object
    q_marginal: np.ndarray
    e_marginal: np.ndarray
    mean_queue: float
    mean_response: float
    bounds: tuple = (0.0, 0.0)
    nu_residual: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def max_queue(self):
        if self.params.lam == 0.0:
            return 0
        return max(snap_levels(self.m_tilde)[1], 1)

    def to_dict(self):
        return {
            "policy": "push",
            "lambda": self.params.lam,
            "delta": self.params.delta,
            "m": self.m,
            "m_tilde": self.m_tilde,
            "nu": self.nu,
            "max_queue": self.max_queue,
            "pi_q": self.q_marginal.tolist(),
            "pi_e": self.e_marginal.tolist(),
            "EQ": self.mean_queue,
            "ER": self.mean_response,
            "bounds": list(self.bounds),
            "nu_residual": self.nu_residual,
        }


def snap_levels(m_tilde):
    """
    (⌊m̃⌋, ⌈m̃⌉) с прижатием почти целых m̃ к целому.

    Returns:
        tuple: (floor, ceil, is_integer)
    """
    nearest = round(m_tilde)
    if abs(m_tilde - nearest) <= INTEGER_SNAP_TOL * max(1.0, abs(m_tilde)):
        return int(nearest), int(nearest), True
    return int(math.floor(m_tilde)), int(math.ceil(m_tilde)), False


def _check_y(y):
    if not 0.0 < y < 1.0:
        raise ValidationError(f"Вероятность y должна лежать в (0, 1), получено {y}")


def push_m_tilde(params, y):
    """
    Максимальная длина очереди m̃ (вещественная).

    m̃ = log[1/y + (λ/(δ(1−λ)) − 1)(1−y)/y] / log(1/y)

    Args:
        params (PushParams): Параметры
        y (float): Вероятность завершить задание раньше таймера δ

    Returns:
        float: m̃ ≥ 0
    """
    _check_y(y)
    lam, delta = params.lam, params.delta
    if lam == 0.0:
        return 0.0
    arg = 1.0 / y + (lam / (delta * (1.0 - lam)) - 1.0) * (1.0 - y) / y
    if arg <= 1.0:
        return 0.0
    return math.log(arg) / math.log(1.0 / y)


def push_lambda_m(m, delta, y):
    """Критическая нагрузка λ→_m, при которой m̃ = m."""
    ym = y ** m
    num = delta * y * (1.0 - ym)
    return num / (num + ym * (1.0 - y))


def push_critical_loads(delta, y, m_max):
    """Критические нагрузки λ→_1..λ→_{m_max} (значения λ, где ⌈m̃⌉ меняется)."""
    return [push_lambda_m(m, delta, y) for m in range(1, m_max + 1)]


def push_delta_m(m, lam, y):
    """Интенсивность опроса δ→_m, при которой m̃ = m для нагрузки λ."""
    return y ** (m - 1) * (1.0 - y) / (1.0 - y ** m) * lam / (1.0 - lam)


def push_build_generator(params, ph, m, nu):
    """
    Генератор Q→(m, ν) очереди в полости.

    Состояния: (0, m), (0, m+1) и (q, e, j), 1 ≤ q ≤ e, e ∈ {m, m+1}.
    Завершение обслуживания уменьшает q; опрос переводит (q, e) в
    (max(q,m), max(q,m)); назначение с интенсивностью ν только при e = m.

    Args:
        params (PushParams): Параметры
        ph (PhaseType): Распределение длительности
        m (int): Уровень m ≥ 0
        nu (float): Интенсивность назначений ν ≥ 0

    Returns:
        Generator
    """
    if m < 0 or nu < 0.0:
        raise ValidationError(f"Требуется m ≥ 0 и ν ≥ 0, получено m={m}, ν={nu}")
    delta = params.delta
    alpha, S, s = ph.alpha, ph.S, ph.s_star
    n_s = ph.n_s

    labels = [(0, m, None), (0, m + 1, None)]
    for e in (m, m + 1):
        labels += [(q, e, j) for q in range(1, e + 1) for j in range(n_s)]
    b = GeneratorBuilder(labels)

    for label in labels:
        q, e, j = label
        if q == 0:
            if m == 0:
                b.add_rate(label, (0, 0, None), delta)
            else:
                for j2 in range(n_s):
                    b.add_rate(label, (m, m, j2), delta * alpha[j2])
            if e == m:
                for j2 in range(n_s):
                    b.add_rate(label, (1, m + 1, j2), nu * alpha[j2])
            continue

        for j2 in range(n_s):
            if j2 != j:
                b.add_rate(label, (q, e, j2), S[j, j2])
        if q == 1:
            b.add_rate(label, (0, e, None), s[j])
        else:
            for j2 in range(n_s):
                b.add_rate(label, (q - 1, e, j2), s[j] * alpha[j2])
        top = max(q, m)
        b.add_rate(label, (top, top, j), delta)
        if e == m:
            b.add_rate(label, (q + 1, m + 1, j), nu)

    return b.build()


def push_build_generator_nu0(params, ph, m):
    """
    Генератор Q→₍₀₎(m): цепь при ν = 0 на состояниях 0 и (q, j), q = 1..m.
    """
    if m < 1:
        raise ValidationError(f"Требуется m ≥ 1, получено {m}")
    delta = params.delta
    alpha, S, s = ph.alpha, ph.S, ph.s_star
    n_s = ph.n_s

    labels = [(0, None)] + [(q, j) for q in range(1, m + 1) for j in range(n_s)]
    b = GeneratorBuilder(labels)
    for j2 in range(n_s):
        b.add_rate((0, None), (m, j2), delta * alpha[j2])
    for q in range(1, m + 1):
        for j in range(n_s):
            label = (q, j)
            for j2 in range(n_s):
                if j2 != j:
                    b.add_rate(label, (q, j2), S[j, j2])
            if q == 1:
                b.add_rate(label, (0, None), s[j])
            else:
                for j2 in range(n_s):
                    b.add_rate(label, (q - 1, j2), s[j] * alpha[j2])
            if q < m:
                b.add_rate(label, (m, j), delta)
    return b.build()


def push_cumulative(params, ph, m):
    """
    Накопленные вероятности Σ_{q<i} π_q(m) цепи Q→₍₀₎(m), i = 1..m.

    Returns:
        np.ndarray длины m
    """
    stats = timer_stats(ph, params.delta)
    y, delta = stats.y, params.delta
    denom = 1.0 / delta + y ** (m - 1) + (1.0 - y ** (m - 1)) * stats.excess
    return np.array([(y ** (m - i) / delta) / denom for i in range(1, m + 1)])


def _idle_prob(dist, m):
    return dist.prob((0, m, None)) + dist.prob((0, m + 1, None))


def push_solve(params, ph):
    """
    Неподвижная точка политики push.

    m = ⌊m̃⌋; если m̃ целое, ν = 0, иначе ν находится бисекцией из
    условия π₀(m, ν) = 1 − λ.

    Args:
        params (PushParams): Параметры
        ph (PhaseType): Распределение длительности (среднее 1)

    Returns:
        PushSolution
    """
    require_unit_mean(ph)
    lam, delta = params.lam, params.delta

    if lam == 0.0:
        gen = push_build_generator(params, ph, 0, 0.0)
        dist = stationary(gen)
        return _assemble(params, 0, 0.0, 0.0, dist, (0.0, 0.0))

    y = timer_stats(ph, delta).y
    m_tilde = push_m_tilde(params, y)
    m, _, is_integer = snap_levels(m_tilde)

    if is_integer:
        nu = 0.0
    else:
        def idle(v):
            return _idle_prob(stationary(push_build_generator(params, ph, m, v)), m)

        hi = bracket_rate(idle, 1.0 - lam)
        nu = bisect_monotone(idle, 1.0 - lam, 0.0, hi, tol=SOLVER_TOL)

    dist = stationary(push_build_generator(params, ph, m, nu))
    bounds = push_mean_queue_bounds(params, ph)
    solution = _assemble(params, m, m_tilde, nu, dist, bounds)
    logger.info(
        "push λ=%.4g δ=%.4g %s: m̃=%.6f m=%d ν=%.8g E[R]=%.6f",
        lam, delta, ph.describe(), m_tilde, m, nu, solution.mean_response,
    )
    return solution


def _assemble(params, m, m_tilde, nu, dist, bounds):
    q_marg = marginal(dist, lambda s: s[0], size=m + 2)
    e_marg = marginal(dist, lambda s: s[1] - m, size=2)
    mean_queue = float(np.arange(m + 2) @ q_marg)
    lam, delta = params.lam, params.delta
    mean_response = mean_queue / lam if lam > 0.0 else 0.0
    rhs = lam - delta * sum((m - q) * q_marg[q] for q in range(m + 1))
    residual = abs(nu * e_marg[0] - rhs) if lam > 0.0 else 0.0
    return PushSolution(
        params=params,
        m=m,
        m_tilde=m_tilde,
        nu=nu,
        dist=dist,
        q_marginal=q_marg,
        e_marginal=e_marg,
        mean_queue=mean_queue,
        mean_response=mean_response,
        bounds=tuple(bounds),
        nu_residual=float(residual),
    )


def push_m_deterministic(params):
    """Предел m̃ для детерминированных заданий (y = e^(−δ))."""
    lam, delta = params.lam, params.delta
    return math.log1p(lam / (1.0 - lam) * math.expm1(delta) / delta) / delta


def push_max_queue_bounds(params):
    """
    Границы ⌈m̃⌉ по всем распределениям со средним 1.

    Нижняя достигается детерминированными заданиями, верхняя
    ⌈λ/((1−λ)δ)⌉ — пределом Z(ε) при ε → 0.

    Returns:
        tuple: (lower, upper)
    """
    lam, delta = params.lam, params.delta
    lower = ceil_tol(push_m_deterministic(params))
    upper = ceil_tol(lam / ((1.0 - lam) * delta))
    return lower, upper


def push_m_erlang_bound(k, params):
    """
    m_Erl(k): нижняя граница m̃ по PH-распределениям порядка k.

    Args:
        k (int): Порядок
        params (PushParams): Параметры

    Returns:
        float
    """
    if k < 1:
        raise ValidationError(f"Порядок k должен быть ≥ 1, получено {k}")
    lam, delta = params.lam, params.delta
    log_ratio = math.log1p(delta / k)
    y_k = math.exp(-k * log_ratio)
    inner = 1.0 + (lam / (1.0 - lam) - delta) * (1.0 - y_k) / delta
    return 1.0 + math.log(inner) / (k * log_ratio)


def push_mean_queue_bounds(params, ph):
    """
    Границы E[Q]: ⌊m̃⌋ − λ→_{⌊m̃⌋}/δ ≤ E[Q] ≤ ⌈m̃⌉ − λ→_{⌈m̃⌉}/δ.

    Returns:
        tuple: (lower, upper)
    """
    lam, delta = params.lam, params.delta
    if lam == 0.0:
        return 0.0, 0.0
    y = timer_stats(ph, delta).y
    lo, hi, _ = snap_levels(push_m_tilde(params, y))
    return lo - push_lambda_m(lo, delta, y) / delta, hi - push_lambda_m(hi, delta, y) / delta


def push_distribution_free_bound(params):
    """Верхняя граница E[Q], не зависящая от распределения: δU²/(1+δU)."""
    u = ceil_tol(params.lam / ((1.0 - params.lam) * params.delta))
    return params.delta * u * u / (1.0 + params.delta * u)


def push_heavy_traffic_slope(y):
    """Наклон m̃ по log(1/(1−λ)) при λ → 1: 1/log(1/y)."""
    if y <= 0.0:
        raise ValidationError(f"Вероятность y должна быть положительной, получено {y}")
    if y >= 1.0:
        return math.inf
    return -1.0 / math.log(y)
