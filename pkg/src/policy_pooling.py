"""
Объединение ресурсов: доля p мощности вынесена в центральный сервер.

Каждый из N серверов обслуживает со скоростью 1−p, центральный сервер
генерирует токены с интенсивностью pN и мгновенно забирает задание у
сервера с самой длинной очередью. Очередь в полости — M/PH/1-очередь,
ограниченная уровнем m+1, с дополнительной интенсивностью ω на верхнем
уровне.
"""
import logging
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import linalg

from src.config import SOLVER_TOL
from src.ctmc import GeneratorBuilder, StationaryDist, bisect_monotone, bracket_rate, marginal, stationary
from src.phase_type import require_unit_mean
from src.validation import SolverError, ValidationError, validate_pooling_params

logger = logging.getLogger(__name__)

CENTRAL_ONLY = "central-only"
SINGLE_SLOT = "single-slot"
GENERAL = "general"

_MAX_LEVEL = 100_000
_GUARD_DIGITS = 30


@dataclass(frozen=True)
class PoolingParams:
    """Параметры: нагрузка λ и доля центрального сервера p."""

    lam: float
    p: float

    def __post_init__(self):
        validate_pooling_params(self.lam, self.p)

    @property
    def rho(self):
        return self.lam / (1.0 - self.p)

    @property
    def idle_target(self):
        return (1.0 - self.lam) / (1.0 - self.p)


@dataclass(frozen=True, eq=False)
class MatrixGeometricR:
    """R = λ(λI − (1−p)S − λ1α)⁻¹."""

    R: np.ndarray


@dataclass(frozen=True, eq=False)
class PoolingSolution:
    """Уровень m, интенсивность ω и распределение длины очереди."""

    params: PoolingParams
    regime: str
    m: int
    omega: float
    dist: object
    q_marginal: np.ndarray
    mean_queue: float
    mean_response: float
    omega_residual: float = 0.0
    level_residual: float = 0.0

    @property
    def max_queue(self):
        return 0 if self.regime == CENTRAL_ONLY else self.m + 1

    def to_dict(self):
        return {
            "policy": "pooling",
            "lambda": self.params.lam,
            "p": self.params.p,
            "regime": self.regime,
            "m": self.m,
            "max_queue": self.max_queue,
            "omega": self.omega,
            "pi_q": self.q_marginal.tolist(),
            "EQ": self.mean_queue,
            "ER": self.mean_response,
            "omega_residual": self.omega_residual,
        }


def pooling_single_slot_threshold(lam):
    """Граница p, начиная с которой очередь в полости не превышает 1."""
    return (1.0 + lam - math.sqrt(1.0 + 2.0 * lam - 3.0 * lam * lam)) / 2.0


def pooling_regime(params, ph=None):
    """
    Режим работы: central-only (λ ≤ p), single-slot или general.

    Граница single-slot не зависит от распределения длительности.
    """
    lam, p = params.lam, params.p
    if lam <= p:
        return CENTRAL_ONLY
    if pooling_single_slot_threshold(lam) <= p:
        return SINGLE_SLOT
    return GENERAL


def pooling_matrix_geometric_r(params, ph):
    """
    Матрица R для уровней ниже m.

    Raises:
        SolverError: Если резольвента вырождена
    """
    lam, p = params.lam, params.p
    n_s = ph.n_s
    A = lam * np.eye(n_s) - (1.0 - p) * ph.S - lam * np.outer(np.ones(n_s), ph.alpha)
    try:
        R = lam * linalg.inv(A)
    except linalg.LinAlgError as e:
        raise SolverError(f"Резольвента для R вырождена: {e}")
    return MatrixGeometricR(R)


def _idle_probs(params, ph):
    """Последовательность π₀(m, ∞) для m = 1, 2, ..."""
    lam, p = params.lam, params.p
    R = pooling_matrix_geometric_r(params, ph).R
    tail = lam * linalg.solve(-(1.0 - p) * ph.S, np.ones(ph.n_s))
    a_pow = ph.alpha.copy()
    a_sum = ph.alpha.copy()
    while True:
        yield 1.0 / (a_sum.sum() + float(a_pow @ tail))
        a_pow = a_pow @ R
        a_sum = a_sum + a_pow


def pooling_idle_prob_truncated(params, ph, m):
    """
    π₀(m, ∞): доля простоя очереди M/PH/1 с местом для m заданий.

    π₀ = (α[Σ_{i<m} R^i + λR^{m−1}(−(1−p)S)⁻¹]1)⁻¹
    """
    if m < 0:
        raise ValidationError(f"Требуется m ≥ 0, получено {m}")
    if m == 0:
        return 1.0
    for level, value in enumerate(_idle_probs(params, ph), start=1):
        if level == m:
            return value


def _require_bounded_level(params):
    if params.lam <= params.p:
        raise ValidationError("Уровень m определен только при λ > p")
    if params.p == 0.0:
        raise SolverError("При p = 0 уровень m не ограничен (M/PH/1 без центрального сервера)")


def pooling_find_m(params, ph):
    """
    Наибольшее m, для которого π₀(m, ∞) > (1−λ)/(1−p).

    В режиме single-slot m = 0 (очередь в полости не длиннее 1).

    Raises:
        SolverError: При p = 0 (π₀(m, ∞) стремится к 1−λ сверху, m не ограничен)
    """
    _require_bounded_level(params)
    target = params.idle_target
    m = 0
    for level, value in enumerate(_idle_probs(params, ph), start=1):
        if value <= target:
            return m
        m = level
        if m > _MAX_LEVEL:
            break
    raise SolverError(f"Уровень m превысил {_MAX_LEVEL}")


def pooling_build_generator(params, ph, m, omega):
    """
    Генератор Q^r(m, ω) на состояниях 0 и (q, j), q = 1..m+1.

    Поступления с интенсивностью λ до уровня m+1, обслуживание
    с множителем 1−p, на уровне m+1 дополнительный уход с интенсивностью ω.
    """
    if m < 0 or omega < 0.0:
        raise ValidationError(f"Требуется m ≥ 0 и ω ≥ 0, получено m={m}, ω={omega}")
    lam, p = params.lam, params.p
    alpha, S, s = ph.alpha, ph.S, ph.s_star
    n_s = ph.n_s
    speed = 1.0 - p

    labels = [(0, None)] + [(q, j) for q in range(1, m + 2) for j in range(n_s)]
    b = GeneratorBuilder(labels)
    for j2 in range(n_s):
        b.add_rate((0, None), (1, j2), lam * alpha[j2])
    for q in range(1, m + 2):
        for j in range(n_s):
            label = (q, j)
            for j2 in range(n_s):
                if j2 != j:
                    b.add_rate(label, (q, j2), speed * S[j, j2])
            if q == 1:
                b.add_rate(label, (0, None), speed * s[j])
            else:
                for j2 in range(n_s):
                    b.add_rate(label, (q - 1, j2), speed * s[j] * alpha[j2])
            if q <= m:
                b.add_rate(label, (q + 1, j), lam)
            else:
                b.add_rate(label, (m, j) if m >= 1 else (0, None), omega)
    return b.build()


def pooling_solve(params, ph):
    """
    Неподвижная точка объединения ресурсов.

    Уровень m находится по π₀(m, ∞), затем ω бисекцией по π₀(m, ω) = (1−λ)/(1−p).

    Returns:
        PoolingSolution
    """
    require_unit_mean(ph)
    regime = pooling_regime(params, ph)
    if regime == CENTRAL_ONLY:
        dist = StationaryDist(np.ones(1), ((0, None),))
        return PoolingSolution(params, regime, 0, 0.0, dist, np.ones(1), 0.0, 0.0)

    target = params.idle_target
    m = pooling_find_m(params, ph)

    def idle(w):
        return stationary(pooling_build_generator(params, ph, m, w)).prob((0, None))

    hi = bracket_rate(idle, target)
    omega = bisect_monotone(idle, target, 0.0, hi, tol=SOLVER_TOL)

    dist = stationary(pooling_build_generator(params, ph, m, omega))
    q_marg = marginal(dist, lambda s: s[0], size=m + 2)
    mean_queue = float(np.arange(m + 2) @ q_marg)

    top = q_marg[m + 1]
    balance = (params.p - params.lam * top) / top if top > 0.0 else math.inf
    omega_residual = abs(omega - balance) / max(1.0, abs(omega))
    level_residual = _level_residual(params, ph, m, omega, q_marg)
    if level_residual > 1e-9:
        logger.warning("Уровни пулинга расходятся с матрично-геометрической формой на %.3e", level_residual)

    logger.info("pooling λ=%.4g p=%.4g %s: режим=%s m=%d ω=%.8g E[R]=%.6f",
                params.lam, params.p, ph.describe(), regime, m, omega, mean_queue / params.lam)
    return PoolingSolution(
        params=params,
        regime=regime,
        m=m,
        omega=omega,
        dist=dist,
        q_marginal=q_marg,
        mean_queue=mean_queue,
        mean_response=mean_queue / params.lam,
        omega_residual=float(omega_residual),
        level_residual=float(level_residual),
    )


def pooling_level_masses(params, ph, m):
    """Массы уровней q = 1..m−1: (1−λ)/(1−p)·αR^q·1 (не зависят от ω)."""
    R = pooling_matrix_geometric_r(params, ph).R
    masses = []
    a_pow = ph.alpha.copy()
    for _ in range(1, m):
        a_pow = a_pow @ R
        masses.append(params.idle_target * a_pow.sum())
    return np.array(masses)


def pooling_top_levels(params, ph, m, omega):
    """
    (π_m, π_{m+1}) из уравнений равновесия двух верхних уровней.

    Returns:
        tuple: массы уровней m и m+1
    """
    if m < 1:
        raise ValidationError(f"Требуется m ≥ 1, получено {m}")
    lam, p = params.lam, params.p
    n_s = ph.n_s
    S, alpha, s = ph.S, ph.alpha, ph.s_star
    eye = np.eye(n_s)
    R = pooling_matrix_geometric_r(params, ph).R
    below = params.idle_target * (ph.alpha @ np.linalg.matrix_power(R, m - 1))
    B = np.block([
        [(1.0 - p) * S - lam * eye, lam * eye],
        [(1.0 - p) * np.outer(s, alpha) + omega * eye, (1.0 - p) * S - omega * eye],
    ])
    rhs = np.concatenate([-lam * below, np.zeros(n_s)])
    x = linalg.solve(B.T, rhs)
    return float(x[:n_s].sum()), float(x[n_s:].sum())


def _level_residual(params, ph, m, omega, q_marg):
    if m < 1:
        return 0.0
    gaps = [0.0]
    masses = pooling_level_masses(params, ph, m)
    if len(masses):
        gaps.append(float(np.abs(masses - q_marg[1:m]).max()))
    top_m, top_m1 = pooling_top_levels(params, ph, m, omega)
    gaps.append(abs(top_m - q_marg[m]))
    gaps.append(abs(top_m1 - q_marg[m + 1]))
    return max(gaps)


def pooling_idle_prob_deterministic(params, n):
    """
    Доля простоя очереди M/D/1 с местом для n заданий (ρ = λ/(1−p)).

    Слагаемые знакопеременной суммы растут как e^{2(n−1)ρ}, поэтому сумма
    считается в mpmath с числом знаков по этой оценке.

    Raises:
        SolverError: Если результат вне (0, 1]
    """
    if n < 1:
        raise ValidationError(f"Требуется n ≥ 1, получено {n}")
    rho = params.rho
    dps = int(2.0 * (n - 1) * rho / math.log(10.0)) + _GUARD_DIGITS
    with mpmath.workdps(dps):
        r = mpmath.mpf(rho)
        total = mpmath.fsum(
            (-1) ** k * mpmath.power(r * (n - 1 - k), k) * mpmath.exp(r * (n - 1 - k)) / mpmath.factorial(k)
            for k in range(n)
        )
        value = float(1 / (1 + r * total))
    if not 0.0 < value <= 1.0:
        raise SolverError(f"Доля простоя M/D/1 вне (0, 1]: {value} при n={n}")
    return value


def pooling_deterministic_min_m(params):
    """
    Уровень m для детерминированных заданий: n − 1, где n — наименьшее
    с π₀^D(n) < (1−λ)/(1−p). Нижняя граница pooling_find_m по распределениям.
    """
    _require_bounded_level(params)
    target = params.idle_target
    for n in range(1, _MAX_LEVEL):
        if pooling_idle_prob_deterministic(params, n) < target:
            return n - 1
    raise SolverError(f"Уровень m превысил {_MAX_LEVEL}")
