"""
Политика pull: серверы сами сообщают длину очереди.

При завершении задания сервер отправляет обновление с вероятностью δ₁,
простаивающий сервер — с интенсивностью δ₀. Суммарная интенсивность
обновлений δ = λδ₁ + (1−λ)δ₀. Максимальная длина очереди не зависит от
распределения длительности задания.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from src.config import SOLVER_TOL
from src.ctmc import (
    GeneratorBuilder,
    bisect_monotone,
    bracket_rate,
    marginal,
    stationary,
)
from src.phase_type import require_unit_mean
from src.policy_push import snap_levels
from src.validation import ValidationError, validate_pull_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PullParams:
    """Параметры pull: λ, вероятность обновления δ₁ и интенсивность δ₀."""

    lam: float
    delta1: float
    delta0: float

    def __post_init__(self):
        validate_pull_params(self.lam, self.delta0, self.delta1)

    @property
    def delta(self):
        return self.lam * self.delta1 + (1.0 - self.lam) * self.delta0

    @classmethod
    def from_total_rate(cls, lam, delta, delta1):
        """
        Параметры по суммарной интенсивности δ: δ₀ = (δ − λδ₁)/(1 − λ).

        Raises:
            ValidationError: Если δ₁ > δ/λ
        """
        if lam >= 1.0:
            raise ValidationError(f"Нагрузка λ должна лежать в [0, 1), получено {lam}")
        delta0 = (delta - lam * delta1) / (1.0 - lam)
        if delta0 < 0.0:
            if delta0 > -1e-15:
                delta0 = 0.0
            else:
                raise ValidationError(
                    f"Вероятность обновления δ₁={delta1} превышает δ/λ={delta / lam:.6g}"
                )
        return cls(lam, delta1, delta0)


@dataclass(frozen=True, eq=False)
class PullSolution:
    """Неподвижная точка (m, ν) политики pull."""

    params: PullParams
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

    @property
    def max_queue(self):
        if self.params.lam == 0.0:
            return 0
        return max(snap_levels(self.m_tilde)[1], 1)

    def to_dict(self):
        return {
            "policy": "pull",
            "lambda": self.params.lam,
            "delta": self.params.delta,
            "delta0": self.params.delta0,
            "delta1": self.params.delta1,
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


def pull_m_tilde(params):
    """
    m̃ = log(1 − λδ₁/δ)/log(1 − δ₁); при δ₁ = 0 предел λ/δ.

    Raises:
        ValidationError: Если δ₀ = 0 при λ > 0 (δ₁ = δ/λ)
    """
    lam, d1 = params.lam, params.delta1
    if lam == 0.0:
        return 0.0
    delta = params.delta
    if d1 == 0.0:
        return lam / delta
    if d1 == 1.0:
        return 0.0
    ratio = 1.0 - lam * d1 / delta
    if ratio <= 0.0:
        raise ValidationError("Интенсивность δ₀ простаивающих серверов должна быть положительной")
    return math.log(ratio) / math.log1p(-d1)


def pull_lambda_m(m, delta0, delta1):
    """Критическая нагрузка λ←_m, при которой m̃ = m."""
    if delta1 == 0.0:
        return delta0 * m / (delta0 * m + 1.0)
    keep = (1.0 - delta1) ** m
    num = delta0 - delta0 * keep
    return num / (num + delta1 * keep)


def pull_q_bar(m, delta0, delta1):
    """Средняя длина очереди q←(m) при целом m̃ = m."""
    if delta1 == 0.0:
        return m * (m + 1) * delta0 / (2.0 * (delta0 * m + 1.0))
    keep = (1.0 - delta1) ** m
    num = delta0 * (m + 1) - delta0 * (1.0 - (1.0 - delta1) ** (m + 1)) / delta1
    return num / (delta0 + keep * (delta1 - delta0))


def _completion_targets(q, e, m, n_s, alpha):
    """Переходы при завершении: без обновления (q−1, e), с обновлением (max(q−1,m), ·)."""
    if q - 1 == 0:
        plain = [((0, e, None), 1.0)]
    else:
        plain = [((q - 1, e, j2), alpha[j2]) for j2 in range(n_s)]
    top = max(q - 1, m)
    if top == 0:
        updated = [((0, 0, None), 1.0)]
    else:
        updated = [((top, top, j2), alpha[j2]) for j2 in range(n_s)]
    return plain, updated


def pull_build_generator(params, ph, m, nu):
    """
    Генератор Q←(m, ν) на состояниях (0, m), (0, m+1), (q, e, j).

    Завершение с вероятностью 1−δ₁ уменьшает q, с вероятностью δ₁ —
    обновление и долив до (m, m); простаивающие серверы обновляются с
    интенсивностью δ₀; назначения ν при e = m.
    """
    if m < 0 or nu < 0.0:
        raise ValidationError(f"Требуется m ≥ 0 и ν ≥ 0, получено m={m}, ν={nu}")
    d0, d1 = params.delta0, params.delta1
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
                b.add_rate(label, (0, 0, None), d0)
            else:
                for j2 in range(n_s):
                    b.add_rate(label, (m, m, j2), d0 * alpha[j2])
            if e == m:
                for j2 in range(n_s):
                    b.add_rate(label, (1, m + 1, j2), nu * alpha[j2])
            continue

        for j2 in range(n_s):
            if j2 != j:
                b.add_rate(label, (q, e, j2), S[j, j2])
        plain, updated = _completion_targets(q, e, m, n_s, alpha)
        for target, weight in plain:
            b.add_rate(label, target, (1.0 - d1) * s[j] * weight)
        for target, weight in updated:
            b.add_rate(label, target, d1 * s[j] * weight)
        if e == m:
            b.add_rate(label, (q + 1, m + 1, j), nu)

    return b.build()


def pull_build_generator_nu0(params, ph, m):
    """Генератор Q←₍₀₎(m) на состояниях 0 и (q, j), q = 1..m."""
    if m < 1:
        raise ValidationError(f"Требуется m ≥ 1, получено {m}")
    d0, d1 = params.delta0, params.delta1
    alpha, S, s = ph.alpha, ph.S, ph.s_star
    n_s = ph.n_s

    labels = [(0, None)] + [(q, j) for q in range(1, m + 1) for j in range(n_s)]
    b = GeneratorBuilder(labels)
    for j2 in range(n_s):
        b.add_rate((0, None), (m, j2), d0 * alpha[j2])
    for q in range(1, m + 1):
        for j in range(n_s):
            label = (q, j)
            for j2 in range(n_s):
                if j2 != j:
                    b.add_rate(label, (q, j2), S[j, j2])
                b.add_rate(label, (m, j2), d1 * s[j] * alpha[j2])
            if q == 1:
                b.add_rate(label, (0, None), (1.0 - d1) * s[j])
            else:
                for j2 in range(n_s):
                    b.add_rate(label, (q - 1, j2), (1.0 - d1) * s[j] * alpha[j2])
    return b.build()


def pull_cumulative(params, m):
    """
    Накопленные вероятности Σ_{q<i} π_q цепи Q←₍₀₎(m), i = 1..m+1.
    Не зависят от распределения длительности.

    Returns:
        np.ndarray длины m+1
    """
    d0, d1 = params.delta0, params.delta1
    if d1 == 0.0:
        return np.array([(i - 1 + 1.0 / d0) / (m + 1.0 / d0) for i in range(1, m + 2)])
    keep = (1.0 - d1) ** m
    denom = d0 + keep * (d1 - d0)
    return np.array([(d0 * (1.0 - d1) ** (m - i + 1) + keep * (d1 - d0)) / denom for i in range(1, m + 2)])


def _idle_prob(dist, m):
    return dist.prob((0, m, None)) + dist.prob((0, m + 1, None))


def pull_solve(params, ph):
    """
    Неподвижная точка политики pull.

    Args:
        params (PullParams): Параметры
        ph (PhaseType): Распределение длительности (среднее 1)

    Returns:
        PullSolution
    """
    require_unit_mean(ph)
    lam = params.lam
    if lam == 0.0:
        dist = stationary(pull_build_generator(params, ph, 0, 0.0))
        return _assemble(params, ph, 0, 0.0, 0.0, dist, (0.0, 0.0))

    m_tilde = pull_m_tilde(params)
    m, _, is_integer = snap_levels(m_tilde)
    if is_integer and m >= 1:
        nu = 0.0
    else:
        def idle(v):
            return _idle_prob(stationary(pull_build_generator(params, ph, m, v)), m)

        hi = bracket_rate(idle, 1.0 - lam)
        nu = bisect_monotone(idle, 1.0 - lam, 0.0, hi, tol=SOLVER_TOL)

    dist = stationary(pull_build_generator(params, ph, m, nu))
    solution = _assemble(params, ph, m, m_tilde, nu, dist, pull_mean_queue_bounds(params))
    logger.info(
        "pull λ=%.4g δ₀=%.4g δ₁=%.4g %s: m̃=%.6f m=%d ν=%.8g E[R]=%.6f",
        lam, params.delta0, params.delta1, ph.describe(), m_tilde, m, nu, solution.mean_response,
    )
    return solution


def _assemble(params, ph, m, m_tilde, nu, dist, bounds):
    q_marg = marginal(dist, lambda s: s[0], size=m + 2)
    e_marg = marginal(dist, lambda s: s[1] - m, size=2)
    mean_queue = float(np.arange(m + 2) @ q_marg)
    lam = params.lam
    residual = 0.0
    if lam > 0.0:
        residual = abs(nu * e_marg[0] - pull_rate_balance(params, dist, m, ph.s_star))
    return PullSolution(
        params=params,
        m=m,
        m_tilde=m_tilde,
        nu=nu,
        dist=dist,
        q_marginal=q_marg,
        e_marginal=e_marg,
        mean_queue=mean_queue,
        mean_response=mean_queue / lam if lam > 0.0 else 0.0,
        bounds=tuple(bounds),
        nu_residual=float(residual),
    )


def pull_rate_balance(params, dist, m, s_star):
    """
    Правая часть баланса назначений:
    λ − δ₀·m·π₀ − δ₁·Σ (m−q+1)·π_(q,e,j)·s*_j.
    """
    idle = _idle_prob(dist, m)
    total = params.lam - params.delta0 * m * idle
    for label, prob in zip(dist.labels, dist.pi):
        q, _, j = label
        if q >= 1 and q <= m:
            total -= params.delta1 * (m - q + 1) * prob * s_star[j]
    return total


def pull_mean_queue_bounds(params):
    """Границы E[Q]: q←(⌊m̃⌋) ≤ E[Q] ≤ q←(⌈m̃⌉)."""
    if params.lam == 0.0:
        return 0.0, 0.0
    lo, hi, _ = snap_levels(pull_m_tilde(params))
    d0, d1 = params.delta0, params.delta1
    return pull_q_bar(lo, d0, d1), pull_q_bar(hi, d0, d1)


def pull_heavy_traffic_slope(delta1):
    """
    Наклон m̃ по log(1/(1 − λδ₁/δ)): 1/log(1/(1−δ₁)).

    При δ₁ = 0 m̃ ограничено (λ/δ) и возвращается 0.
    """
    if not 0.0 <= delta1 <= 1.0:
        raise ValidationError(f"δ₁ должна лежать в [0, 1], получено {delta1}")
    if delta1 == 0.0 or delta1 == 1.0:
        return 0.0
    return -1.0 / math.log1p(-delta1)
