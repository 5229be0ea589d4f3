"""
Дискретно-событийная симуляция N серверов для четырех политик.

Обслуживание PH-заданий моделируется по фазам; все события хранятся в
едином календаре (двоичная куча). Прогоны независимы и получают
собственные потоки случайных чисел от общего SeedSequence.
"""
import bisect
import heapq
import itertools
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from src.config import DEFAULT_ARRIVALS_PER_SERVER, DEFAULT_RUNS, DEFAULT_SEED, DEFAULT_WARMUP, worker_count
from src.phase_type import PhaseType
from src.policy_pooling import PoolingParams, pooling_solve
from src.policy_pull import PullParams, pull_solve
from src.policy_push import PushParams, push_solve
from src.policy_waterfill import WaterfillParams, wf_solve
from src.validation import (
    SolverError,
    ValidationError,
    validate_sim_inputs,
    validate_waterfill_geometry,
)

logger = logging.getLogger(__name__)

POLICIES = ("push", "pull", "waterfill", "pooling")

_PARAM_TYPES = {
    "push": PushParams,
    "pull": PullParams,
    "waterfill": WaterfillParams,
    "pooling": PoolingParams,
}

_ARRIVAL, _PHASE, _POLL, _IDLE_UPDATE, _TOKEN = range(5)


def cavity_solve(policy, params, ph):
    """Решение очереди в полости для политики."""
    if policy == "push":
        return push_solve(params, ph)
    if policy == "pull":
        return pull_solve(params, ph)
    if policy == "waterfill":
        return wf_solve(params, ph)
    if policy == "pooling":
        return pooling_solve(params, ph)
    raise ValidationError(f"Неизвестная политика: {policy}")


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass
class SimConfig:
    """Конфигурация симуляции."""

    policy: str
    params: object
    ph: PhaseType
    n_servers: int
    arrivals_total: int = None
    warmup_fraction: float = DEFAULT_WARMUP
    runs: int = DEFAULT_RUNS
    seed: int = DEFAULT_SEED
    batch_constant: float = None
    check_invariants: bool = False
    trace_path: str = None
    workers: int = None

    def __post_init__(self):
        if self.arrivals_total is None:
            self.arrivals_total = self.n_servers * DEFAULT_ARRIVALS_PER_SERVER
        validate_sim_inputs(self.policy, self.n_servers, self.runs, self.warmup_fraction, self.arrivals_total)
        expected = _PARAM_TYPES[self.policy]
        if not isinstance(self.params, expected):
            raise ValidationError(
                f"Политика {self.policy} ожидает параметры {expected.__name__}, получено {type(self.params).__name__}"
            )
        if self.policy == "waterfill":
            if self.batch_constant is None or self.batch_constant <= 0.0:
                raise ValidationError("Для water filling требуется положительная константа C")
            validate_waterfill_geometry(self.n_servers, *self.batch_geometry())

    def batch_geometry(self):
        """
        Размер пакета M = C·log₁₀N и число опрашиваемых серверов d = (δ/λ)·M,
        округленные до ближайшего целого, не меньше 1.

        Returns:
            tuple: (M, d)
        """
        if self.policy != "waterfill":
            return 1, 1
        batch = max(1, round_half_up(self.batch_constant * math.log10(self.n_servers)))
        lam = self.params.lam
        sample = max(1, round_half_up(self.params.delta / lam * batch)) if lam > 0.0 else 1
        return batch, sample

    @classmethod
    def from_dict(cls, data):
        """Конфигурация из JSON-словаря (поле ph: строка или словарь распределения)."""
        data = dict(data)
        policy = data.pop("policy")
        ph_spec = data.pop("ph")
        ph = PhaseType.from_spec(ph_spec) if isinstance(ph_spec, str) else PhaseType.from_config(ph_spec)
        raw = data.pop("params")
        if policy == "pull" and "delta0" not in raw:
            params = PullParams.from_total_rate(raw["lam"], raw["delta"], raw.get("delta1", 0.0))
        else:
            params = _PARAM_TYPES[policy](**raw)
        return cls(policy=policy, params=params, ph=ph, **data)


@dataclass
class SimRunResult:
    """Результат одного прогона."""

    mean_response: float
    jobs_observed: int
    idle_fraction: float
    events: int
    traces: list = field(default_factory=list)


@dataclass
class SimReport:
    """Сводка по прогонам и сравнение с пределом N → ∞."""

    policy: str
    n_servers: int
    mean_response: float
    ci_halfwidth: float
    per_run_means: tuple
    cavity_prediction: float
    relative_error_pct: float
    jobs_observed: int
    idle_fraction: float
    batch_size: int = 1
    sample_size: int = 1

    def to_dict(self):
        return {
            "policy": self.policy,
            "N": self.n_servers,
            "mean_response": self.mean_response,
            "ci_halfwidth": self.ci_halfwidth,
            "per_run_means": list(self.per_run_means),
            "cavity_prediction": self.cavity_prediction,
            "relative_error_pct": self.relative_error_pct,
            "jobs_observed": self.jobs_observed,
            "idle_fraction": self.idle_fraction,
            "M": self.batch_size,
            "d": self.sample_size,
        }


class _RandomStream:
    """Буферизованные равномерные и экспоненциальные величины."""

    def __init__(self, rng, block=1 << 14):
        self.rng = rng
        self.block = block
        self._u = []
        self._e = []

    def uniform(self):
        if not self._u:
            self._u = self.rng.random(self.block).tolist()
        return self._u.pop()

    def exponential(self, rate):
        if not self._e:
            self._e = self.rng.standard_exponential(self.block).tolist()
        return self._e.pop() / rate

    def index(self, n):
        return min(int(self.uniform() * n), n - 1)


class _LevelIndex:
    """
    Упорядоченное по уровню множество серверов с равновероятным выбором
    среди серверов одного уровня.
    """

    def __init__(self, n):
        self.level = [0] * n
        self.members = {0: list(range(n))}
        self.pos = list(range(n))
        self.min_level = 0
        self.max_level = 0

    def move(self, i, new):
        old = self.level[i]
        if old == new:
            return
        bucket = self.members[old]
        p = self.pos[i]
        last = bucket.pop()
        if last != i:
            bucket[p] = last
            self.pos[last] = p
        if not bucket:
            del self.members[old]
        target = self.members.setdefault(new, [])
        self.pos[i] = len(target)
        target.append(i)
        self.level[i] = new

        if new < self.min_level:
            self.min_level = new
        elif old == self.min_level and old not in self.members:
            while self.min_level not in self.members:
                self.min_level += 1
        if new > self.max_level:
            self.max_level = new
        elif old == self.max_level and old not in self.members:
            while self.max_level not in self.members:
                self.max_level -= 1

    def pick(self, level, stream):
        bucket = self.members[level]
        return bucket[stream.index(len(bucket))]


def _phase_tables(ph, speed):
    """Интенсивности ухода из фаз и накопленные вероятности исходов (исход −1 означает завершение)."""
    S, s = ph.S, ph.s_star
    n_s = ph.n_s
    rates, cums, outcomes = [], [], []
    for j in range(n_s):
        rate = -S[j, j]
        probs, targets = [], []
        for j2 in range(n_s):
            if j2 != j and S[j, j2] > 0.0:
                probs.append(S[j, j2] / rate)
                targets.append(j2)
        if s[j] > 0.0:
            probs.append(s[j] / rate)
            targets.append(-1)
        rates.append(rate * speed)
        cums.append(np.cumsum(probs).tolist())
        outcomes.append(targets)
    start = np.cumsum(ph.alpha).tolist()
    return rates, cums, outcomes, start


def _draw(cum, stream):
    u = stream.uniform() * cum[-1]
    return min(bisect.bisect_right(cum, u), len(cum) - 1)


class LoadBalancingSimulation:
    """
    Один прогон симуляции.

    Args:
        config (SimConfig): Конфигурация
        rng (np.random.Generator): Генератор случайных чисел прогона
    """

    def __init__(self, config, rng):
        self.config = config
        self.rng = rng
        self.stream = _RandomStream(rng)
        self.n = config.n_servers
        self.policy = config.policy
        params = config.params
        self.lam = params.lam
        speed = 1.0 - params.p if self.policy == "pooling" else 1.0
        self.rates, self.cums, self.outcomes, self.start_cum = _phase_tables(config.ph, speed)

        self.jobs = [deque() for _ in range(self.n)]
        self.phase = [0] * self.n
        self.version = [0] * self.n
        self.estimates = _LevelIndex(self.n) if self.policy in ("push", "pull") else None
        self.lengths = _LevelIndex(self.n) if self.policy == "pooling" else None
        self.batch_size, self.sample_size = config.batch_geometry()

        self.calendar = []
        self.seq = itertools.count()
        self.now = 0.0

        self.arrived = 0
        self.completed = 0
        self.in_system = 0
        self.idle = self.n
        self.warmup_count = int(config.warmup_fraction * config.arrivals_total)
        self.outstanding = 0
        self.response_sum = 0.0
        self.observed = 0
        self.window_start = None
        self.window_end = None
        self.idle_area = 0.0
        self.traces = [] if config.trace_path else None

    def _schedule(self, delay, kind, server=-1, version=0):
        heapq.heappush(self.calendar, (self.now + delay, next(self.seq), kind, server, version))

    def _arrival_rate(self):
        if self.policy == "waterfill":
            return self.lam * self.n / self.batch_size
        return self.lam * self.n

    def run(self):
        """
        Выполняет прогон до поступления arrivals_total заданий и ухода всех
        учитываемых заданий.

        Returns:
            SimRunResult
        """
        cfg = self.config
        if cfg.arrivals_total == 0 or self.lam == 0.0:
            return SimRunResult(math.nan, 0, 1.0, 0)

        self._schedule(self.stream.exponential(self._arrival_rate()), _ARRIVAL)
        if self.policy == "push":
            self._schedule(self.stream.exponential(cfg.params.delta * self.n), _POLL)
        if self.policy == "pooling" and cfg.params.p > 0.0:
            self._schedule(self.stream.exponential(cfg.params.p * self.n), _TOKEN)

        events = 0
        while self.calendar:
            if self.arrived >= cfg.arrivals_total and self.outstanding == 0:
                break
            time, _, kind, server, version = heapq.heappop(self.calendar)
            if self.window_start is not None and self.window_end is None:
                self.idle_area += self.idle * (time - self.now)
            self.now = time
            events += 1

            if kind == _PHASE:
                if version == self.version[server]:
                    self._phase_event(server)
            elif kind == _ARRIVAL:
                self._arrival_event()
            elif kind == _POLL:
                i = self.stream.index(self.n)
                self.estimates.move(i, len(self.jobs[i]))
                self._schedule(self.stream.exponential(cfg.params.delta * self.n), _POLL)
            elif kind == _IDLE_UPDATE:
                if version == self.version[server] and not self.jobs[server]:
                    self.estimates.move(server, 0)
            elif kind == _TOKEN:
                self._token_event()
                self._schedule(self.stream.exponential(cfg.params.p * self.n), _TOKEN)

            if cfg.check_invariants:
                self._check_invariants()

        if self.window_end is None:
            self.window_end = self.now
        span = (self.window_end - self.window_start) if self.window_start is not None else 0.0
        idle_fraction = self.idle_area / (span * self.n) if span > 0.0 else math.nan
        mean = self.response_sum / self.observed if self.observed else math.nan
        return SimRunResult(mean, self.observed, idle_fraction, events, self.traces or [])

    def _new_job(self):
        measured = self.arrived >= self.warmup_count
        if self.arrived == self.warmup_count and self.window_start is None:
            self.window_start = self.now
        self.arrived += 1
        self.in_system += 1
        if measured:
            self.outstanding += 1
        if self.arrived == self.config.arrivals_total:
            self.window_end = self.now
        return (self.now, measured)

    def _arrival_event(self):
        if self.policy == "waterfill":
            self._batch_arrival()
        else:
            job = self._new_job()
            if self.policy == "pooling":
                i = self.stream.index(self.n)
                self._assign(i, job)
                self.lengths.move(i, len(self.jobs[i]))
            else:
                est = self.estimates
                i = est.pick(est.min_level, self.stream)
                self._assign(i, job)
                est.move(i, est.level[i] + 1)
        if self.arrived < self.config.arrivals_total:
            self._schedule(self.stream.exponential(self._arrival_rate()), _ARRIVAL)

    def _batch_arrival(self):
        sampled = self.rng.choice(self.n, size=self.sample_size, replace=False)
        heap = [(len(self.jobs[i]), self.stream.uniform(), int(i)) for i in sampled]
        heapq.heapify(heap)
        remaining = self.config.arrivals_total - self.arrived
        for _ in range(min(self.batch_size, remaining)):
            length, _, i = heapq.heappop(heap)
            self._assign(i, self._new_job())
            heapq.heappush(heap, (length + 1, self.stream.uniform(), i))

    def _assign(self, i, job):
        queue = self.jobs[i]
        queue.append(job)
        if len(queue) == 1:
            self.idle -= 1
            self._start_service(i)

    def _start_service(self, i):
        self.version[i] += 1
        j = _draw(self.start_cum, self.stream)
        self.phase[i] = j
        self._schedule(self.stream.exponential(self.rates[j]), _PHASE, i, self.version[i])

    def _phase_event(self, i):
        j = self.phase[i]
        nxt = self.outcomes[j][_draw(self.cums[j], self.stream)]
        if nxt < 0:
            self._complete(i)
        else:
            self.phase[i] = nxt
            self._schedule(self.stream.exponential(self.rates[nxt]), _PHASE, i, self.version[i])

    def _record(self, job, server):
        arrival, measured = job
        self.completed += 1
        self.in_system -= 1
        if measured:
            self.response_sum += self.now - arrival
            self.observed += 1
            self.outstanding -= 1
            if self.traces is not None:
                self.traces.append((arrival, self.now, server))

    def _complete(self, i):
        queue = self.jobs[i]
        self._record(queue.popleft(), i)
        self.version[i] += 1
        if self.policy == "pull" and self.stream.uniform() < self.config.params.delta1:
            self.estimates.move(i, len(queue))
        if queue:
            self._start_service(i)
        else:
            self.idle += 1
            self._on_idle(i)
        if self.policy == "pooling":
            self.lengths.move(i, len(queue))

    def _on_idle(self, i):
        if self.policy == "pull":
            d0 = self.config.params.delta0
            # повторные обновления при нулевой оценке ничего не меняют
            if d0 > 0.0 and self.estimates.level[i] != 0:
                self._schedule(self.stream.exponential(d0), _IDLE_UPDATE, i, self.version[i])

    def _token_event(self):
        lengths = self.lengths
        if lengths.max_level == 0:
            return
        i = lengths.pick(lengths.max_level, self.stream)
        queue = self.jobs[i]
        if len(queue) >= 2:
            self._record(queue.pop(), i)
        else:
            self._record(queue.popleft(), i)
            self.version[i] += 1
            self.idle += 1
        lengths.move(i, len(queue))

    def _check_invariants(self):
        if self.arrived != self.completed + self.in_system:
            raise SolverError("Нарушен баланс заданий: поступило ≠ завершено + в системе")
        if self.in_system != sum(len(q) for q in self.jobs):
            raise SolverError("Нарушен учет заданий в очередях")
        if self.estimates is not None:
            for i in range(self.n):
                if self.estimates.level[i] < len(self.jobs[i]):
                    raise SolverError(f"Оценка очереди сервера {i} меньше фактической длины")


def _run_once(config, seed_seq, run_index):
    rng = np.random.default_rng(seed_seq)
    result = LoadBalancingSimulation(config, rng).run()
    logger.info("прогон %d: E[R]=%.6f, заданий %d, событий %d",
                run_index, result.mean_response, result.jobs_observed, result.events)
    return result


def aggregate(per_run_means):
    """
    Среднее и полуширина 95% доверительного интервала Стьюдента.

    Args:
        per_run_means (sequence): Средние по прогонам

    Returns:
        tuple: (mean, ci_halfwidth)

    Raises:
        ValidationError: Если прогонов меньше двух
    """
    values = np.asarray(per_run_means, dtype=float)
    if values.size < 2:
        raise ValidationError(f"Для доверительного интервала нужно не меньше 2 прогонов, получено {values.size}")
    n = values.size
    mean = float(values.mean())
    halfwidth = float(stats.t.ppf(0.975, n - 1) * values.std(ddof=1) / math.sqrt(n))
    return mean, halfwidth


def simulate(config, cavity_prediction=None):
    """
    Серия независимых прогонов и сравнение с пределом очереди в полости.

    Args:
        config (SimConfig): Конфигурация
        cavity_prediction (float, optional): Готовое значение E[R] при N → ∞

    Returns:
        SimReport
    """
    children = np.random.SeedSequence(config.seed).spawn(config.runs)
    workers = min(config.workers or worker_count(), config.runs)
    logger.info("симуляция %s N=%d: %d прогонов, %d процессов",
                config.policy, config.n_servers, config.runs, workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_once, [config] * config.runs, children, range(config.runs)))
    else:
        results = [_run_once(config, child, k) for k, child in enumerate(children)]

    if config.trace_path:
        frames = [
            pd.DataFrame(r.traces, columns=["arrival", "departure", "server"]).assign(run=k)
            for k, r in enumerate(results)
        ]
        pd.concat(frames, ignore_index=True)[["run", "arrival", "departure", "server"]].to_csv(
            config.trace_path, index=False
        )

    observed = [r for r in results if r.jobs_observed > 0]
    per_run = tuple(r.mean_response for r in observed)
    jobs = sum(r.jobs_observed for r in results)
    if len(per_run) >= 2:
        mean, halfwidth = aggregate(per_run)
    elif per_run:
        mean, halfwidth = per_run[0], math.nan
    else:
        mean, halfwidth = math.nan, math.nan
    idle = [r.idle_fraction for r in observed if not math.isnan(r.idle_fraction)]
    idle_fraction = float(np.mean(idle)) if idle else math.nan

    if cavity_prediction is None:
        if config.params.lam == 0.0:
            cavity_prediction = 0.0
        else:
            try:
                cavity_prediction = cavity_solve(config.policy, config.params, config.ph).mean_response
            except SolverError as e:
                logger.warning("Предел N → ∞ не вычислен: %s", e)
                cavity_prediction = math.nan
    if jobs and cavity_prediction > 0.0:
        rel_err = 100.0 * abs(mean - cavity_prediction) / cavity_prediction
    else:
        rel_err = math.nan

    batch, sample = config.batch_geometry()
    return SimReport(
        policy=config.policy,
        n_servers=config.n_servers,
        mean_response=mean,
        ci_halfwidth=halfwidth,
        per_run_means=per_run,
        cavity_prediction=cavity_prediction,
        relative_error_pct=rel_err,
        jobs_observed=jobs,
        idle_fraction=idle_fraction,
        batch_size=batch,
        sample_size=sample,
    )
