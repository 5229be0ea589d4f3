"""
Пакетная политика water filling.

Пакет из M заданий распределяется по δ/λ·M выбранным очередям, каждое
задание — в текущую кратчайшую. В пределе очередь в полости скачком
доливается до уровня m (с вероятностью 1−c) или m+1 (с вероятностью c)
с интенсивностью δ.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from src.config import CROSS_CHECK_TOL, SOLVER_TOL
from src.ctmc import GeneratorBuilder, bisect_monotone, marginal, stationary
from src.phase_type import require_unit_mean, timer_stats
from src.policy_push import PushParams, push_m_tilde, push_mean_queue_bounds, snap_levels
from src.validation import SolverError, ValidationError, validate_push_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WaterfillParams:
    """Параметры water filling: нагрузка λ и суммарная интенсивность опроса δ."""

    lam: float
    delta: float

    def __post_init__(self):
        validate_push_params(self.lam, self.delta)

    def as_push(self):
        return PushParams(self.lam, self.delta)


@dataclass(frozen=True, eq=False)
class WaterfillSolution:
    """Неподвижная точка (m, c) и распределение длины очереди."""

    params: WaterfillParams
    m: int
    m_tilde: float
    c: float
    c_formula: float
    dist: object
    q_marginal: np.ndarray
    closed_form: np.ndarray
    mean_queue: float
    mean_response: float
    bounds: tuple = (0.0, 0.0)

    def to_dict(self):
        return {
            "policy": "waterfill",
            "lambda": self.params.lam,
            "delta": self.params.delta,
            "m": self.m,
            "m_tilde": self.m_tilde,
            "c": self.c,
            "c_formula": self.c_formula,
            "pi_q": self.q_marginal.tolist(),
            "EQ": self.mean_queue,
            "ER": self.mean_response,
            "bounds": list(self.bounds),
        }


def wf_build_generator(params, ph, m, c):
    """
    Генератор Q^w(m, c) на состояниях 0 и (q, j), q = 1..m+1.

    Из состояний ниже m — скачок на уровень m с интенсивностью δ(1−c)
    и на m+1 с интенсивностью δc; с уровня m — на m+1 с интенсивностью δc.
    """
    if m < 0 or not 0.0 <= c <= 1.0:
        raise ValidationError(f"Требуется m ≥ 0 и c ∈ [0, 1], получено m={m}, c={c}")
    delta = params.delta
    alpha, S, s = ph.alpha, ph.S, ph.s_star
    n_s = ph.n_s

    labels = [(0, None)] + [(q, j) for q in range(1, m + 2) for j in range(n_s)]
    b = GeneratorBuilder(labels)

    def fill(label, level, rate, j):
        # задание в обслуживании сохраняет фазу, пустая очередь получает новое задание
        if level == 0:
            b.add_rate(label, (0, None), rate)
        elif j is None:
            for j2 in range(n_s):
                b.add_rate(label, (level, j2), rate * alpha[j2])
        else:
            b.add_rate(label, (level, j), rate)

    for label in labels:
        q, j = label
        if q < m:
            fill(label, m, delta * (1.0 - c), j)
            fill(label, m + 1, delta * c, j)
        elif q == m:
            fill(label, m + 1, delta * c, j)
        if q == 0:
            continue
        for j2 in range(n_s):
            if j2 != j:
                b.add_rate(label, (q, j2), S[j, j2])
        if q == 1:
            b.add_rate(label, (0, None), s[j])
        else:
            for j2 in range(n_s):
                b.add_rate(label, (q - 1, j2), s[j] * alpha[j2])
    return b.build()


def _idle_prob(params, ph, m, c):
    return stationary(wf_build_generator(params, ph, m, c)).prob((0, None))


def _formula_idle(params, ph, m, c, stats):
    """Правая часть уравнения на c: доля простоя при заданном c."""
    delta, y = params.delta, stats.y
    n_s = ph.n_s
    S, alpha, s = ph.S, ph.alpha, ph.s_star
    eye = np.eye(n_s)
    K = np.block([
        [S - delta * c * eye, delta * c * eye],
        [np.outer(s, alpha), S],
    ])
    entry = y ** (m - 1) * alpha + (1.0 - y ** (m - 1)) * stats.alpha_prime
    kappa = np.kron(np.array([1.0 - c, c]), entry)
    sojourn = linalg.solve(-K, np.ones(2 * n_s))
    return (y ** (m - 1) / delta) / (1.0 / delta + float(kappa @ sojourn))


def wf_find_c(params, ph, m):
    """
    Доля c заданий, доливаемых до уровня m+1, из уравнения восстановления.

    Args:
        params (WaterfillParams): Параметры
        ph (PhaseType): Распределение длительности
        m (int): Уровень m = ⌊m̃⌋ ≥ 1

    Returns:
        float: c ∈ [0, 1)

    Raises:
        SolverError: Если корня в [0, 1] нет (неверный m)
    """
    if m < 1:
        raise ValidationError(f"Формула для c требует m ≥ 1, получено {m}")
    stats = timer_stats(ph, params.delta)
    return bisect_monotone(
        lambda c: _formula_idle(params, ph, m, c, stats), 1.0 - params.lam, 0.0, 1.0, tol=SOLVER_TOL
    )


def wf_find_c_numeric(params, ph, m):
    """c из условия π₀(m, c) = 1 − λ на численном генераторе."""
    return bisect_monotone(
        lambda c: _idle_prob(params, ph, m, c), 1.0 - params.lam, 0.0, 1.0, tol=SOLVER_TOL
    )


def wf_c_exponential(params, m):
    """c для экспоненциальных заданий: 1/(δ(1−λ)(1+δ)^m) − 1/δ."""
    lam, delta = params.lam, params.delta
    return 1.0 / (delta * (1.0 - lam) * (1.0 + delta) ** m) - 1.0 / delta


def wf_closed_form_dist(params, ph, m, c, pi_m1=None):
    """
    Распределение длины очереди в явном виде.

    π_q = (1−λ)(1/y−1)/y^{q−1}, q = 1..m−1;
    π_{m+1} = 1 − (λ/δ − Σ_{q<m}(m−q)π_q)/c;
    π_m = 1 − (1−λ)y^{1−m} − π_{m+1}.

    Args:
        pi_m1 (float, optional): Заданное значение π_{m+1} вместо формулы

    Returns:
        np.ndarray длины m+2
    """
    lam, delta = params.lam, params.delta
    pi = np.zeros(m + 2)
    pi[0] = 1.0 - lam
    if m == 0:
        pi[1] = lam
        return pi
    y = timer_stats(ph, delta).y
    for q in range(1, m):
        pi[q] = (1.0 - lam) * (1.0 / y - 1.0) / y ** (q - 1)
    if pi_m1 is not None:
        top = pi_m1
    elif c == 0.0:
        top = 0.0
    else:
        deficit = sum((m - q) * pi[q] for q in range(m))
        top = 1.0 - (lam / delta - deficit) / c
    pi[m + 1] = top
    pi[m] = 1.0 - (1.0 - lam) * y ** (1 - m) - top
    return pi


def wf_solve(params, ph):
    """
    Неподвижная точка water filling: m = ⌊m̃⌋ как у push, c — бисекцией.

    Численный путь определяет c; найденное c подставляется в уравнение
    восстановления, явное распределение сверяется с численным.

    Returns:
        WaterfillSolution

    Raises:
        SolverError: Если невязка уравнения восстановления при найденном c
            превышает CROSS_CHECK_TOL
    """
    require_unit_mean(ph)
    lam, delta = params.lam, params.delta
    if lam == 0.0:
        raise ValidationError("Water filling требует λ > 0")

    y = timer_stats(ph, delta).y
    m_tilde = push_m_tilde(params.as_push(), y)
    m, _, is_integer = snap_levels(m_tilde)

    if is_integer and m >= 1:
        c = 0.0
    else:
        c = wf_find_c_numeric(params, ph, m)

    c_formula = c
    if m >= 1:
        residual = abs(_formula_idle(params, ph, m, c, timer_stats(ph, delta)) - (1.0 - lam))
        if residual > CROSS_CHECK_TOL:
            raise SolverError(f"c = {c:.12g} не удовлетворяет уравнению восстановления (невязка {residual:.3e})")
        if not is_integer:
            c_formula = wf_find_c(params, ph, m)
        if abs(c_formula - c) > CROSS_CHECK_TOL:
            logger.warning("c: численное %.12g и по формуле %.12g расходятся при невязке %.3e",
                           c, c_formula, residual)

    dist = stationary(wf_build_generator(params, ph, m, c))
    q_marg = marginal(dist, lambda s: s[0], size=m + 2)
    closed = wf_closed_form_dist(params, ph, m, c)
    gap = float(np.abs(closed - q_marg).max())
    if gap > 1e-9:
        logger.warning("Явное распределение water filling расходится с численным на %.3e", gap)

    mean_queue = float(np.arange(m + 2) @ q_marg)
    bounds = push_mean_queue_bounds(params.as_push(), ph)
    logger.info("waterfill λ=%.4g δ=%.4g %s: m=%d c=%.8f E[R]=%.6f",
                lam, delta, ph.describe(), m, c, mean_queue / lam)
    return WaterfillSolution(
        params=params,
        m=m,
        m_tilde=m_tilde,
        c=c,
        c_formula=c_formula,
        dist=dist,
        q_marginal=q_marg,
        closed_form=closed,
        mean_queue=mean_queue,
        mean_response=mean_queue / lam,
        bounds=bounds,
    )
