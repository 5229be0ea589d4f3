"""
Тесты для объединения ресурсов.
"""
import numpy as np
import pytest

from src.cli import row_params
from src.data import POOLING_ROWS
from src.phase_type import make_erlang, make_exponential, make_hyper_erlang, make_hyperexp
from src.policy_pooling import (
    CENTRAL_ONLY,
    GENERAL,
    SINGLE_SLOT,
    PoolingParams,
    pooling_deterministic_min_m,
    pooling_find_m,
    pooling_idle_prob_deterministic,
    pooling_idle_prob_truncated,
    pooling_regime,
    pooling_single_slot_threshold,
    pooling_solve,
)
from src.validation import SolverError, ValidationError


def _mm1_idle(rho, m):
    return (1.0 - rho) / (1.0 - rho ** (m + 1))


class TestPoolingParams:
    """Валидация и производные величины."""

    def test_rho_and_target(self):
        """ρ = λ/(1−p) и целевая доля простоя (1−λ)/(1−p)."""
        params = PoolingParams(0.8, 0.3)
        assert abs(params.rho - 0.8 / 0.7) < 1e-15
        assert abs(params.idle_target - 0.2 / 0.7) < 1e-15

    def test_p_equal_one(self):
        """p = 1 не допускается."""
        with pytest.raises(ValidationError):
            PoolingParams(0.5, 1.0)


class TestRegime:
    """Определение режима по λ и p."""

    def test_threshold(self):
        """Граница single-slot при λ = 0.5."""
        assert abs(pooling_single_slot_threshold(0.5) - 0.19098) < 1e-5

    def test_regimes(self):
        """Три режима на трех точках (λ, p)."""
        assert pooling_regime(PoolingParams(0.3, 0.5)) == CENTRAL_ONLY
        assert pooling_regime(PoolingParams(0.5, 0.3)) == SINGLE_SLOT
        assert pooling_regime(PoolingParams(0.8, 0.3)) == GENERAL


class TestIdleProbabilities:
    """Доля простоя усеченной очереди."""

    @pytest.mark.parametrize("m", [1, 2, 3, 6])
    def test_exponential_matches_mm1(self, m):
        """Для экспоненциальных заданий совпадает с M/M/1/m."""
        params = PoolingParams(0.8, 0.3)
        value = pooling_idle_prob_truncated(params, make_exponential(), m)
        assert abs(value - _mm1_idle(params.rho, m)) < 1e-12

    def test_empty_buffer(self, erlang3_ph):
        """При m = 0 очередь всегда пуста."""
        assert pooling_idle_prob_truncated(PoolingParams(0.8, 0.3), erlang3_ph, 0) == 1.0

    def test_single_slot_insensitive(self, catalog):
        """При m = 1 доля простоя 1/(1+ρ) для любого распределения."""
        params = PoolingParams(0.6, 0.2)
        values = [pooling_idle_prob_truncated(params, ph, 1) for ph in catalog]
        assert np.ptp(values) < 1e-12
        assert abs(values[0] - 1.0 / (1.0 + params.rho)) < 1e-12

    def test_deterministic_single_place(self):
        """M/D/1 с одним местом: π₀ = 1/(1+ρ)."""
        params = PoolingParams(0.8, 0.3)
        assert abs(pooling_idle_prob_deterministic(params, 1) - 1.0 / (1.0 + params.rho)) < 1e-14

    def test_deterministic_two_places(self):
        """M/D/1 с местом для двух заданий: π₀ = 1/(1 + ρe^ρ)."""
        params = PoolingParams(0.8, 0.3)
        expected = 1.0 / (1.0 + params.rho * np.exp(params.rho))
        assert abs(pooling_idle_prob_deterministic(params, 2) - expected) < 1e-12

    def test_deterministic_matches_erlang_proxy(self):
        """Знакопеременная сумма близка к Эрлангу(256) при n = 3."""
        params = PoolingParams(0.8, 0.3)
        proxy = pooling_idle_prob_truncated(params, make_erlang(256), 3)
        assert abs(pooling_idle_prob_deterministic(params, 3) - proxy) < 5e-3

    def test_deterministic_long_buffers(self):
        """При n = 5..40 сумма положительна, убывает по n и близка к Эрлангу(256)."""
        params = PoolingParams(0.8, 0.3)
        proxy_ph = make_erlang(256)
        values = []
        for n in range(5, 41):
            value = pooling_idle_prob_deterministic(params, n)
            proxy = pooling_idle_prob_truncated(params, proxy_ph, n)
            assert 0.0 < value <= 1.0
            assert abs(value - proxy) < 0.05 * proxy
            values.append(value)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_deterministic_high_load_factor(self):
        """При ρ ≈ 2.4 и n = 60 доля простоя остается в (0, 1) и убывает по n."""
        params = PoolingParams(0.95, 0.6)
        tail = [pooling_idle_prob_deterministic(params, n) for n in (58, 59, 60)]
        assert all(0.0 < v < 1.0 for v in tail)
        assert tail[0] > tail[1] > tail[2]


class TestFindM:
    """Уровень m."""

    def test_exponential(self, exp_ph):
        """λ = 0.8, p = 0.3: m = 2."""
        assert pooling_find_m(PoolingParams(0.8, 0.3), exp_ph) == 2

    def test_deterministic_lower_bound(self):
        """Детерминированные задания дают наименьший уровень m."""
        params = PoolingParams(0.8, 0.3)
        m_det = pooling_deterministic_min_m(params)
        assert m_det == 1
        for ph in (make_exponential(), make_erlang(4), make_hyperexp(5.0, 0.5)):
            assert m_det <= pooling_find_m(params, ph)

    @pytest.mark.parametrize("k", [4, 6])
    def test_erlang_minimizes_among_order_k(self, k):
        """Эрланг(k) дает m не больше смесей Эрланга с k фазами."""
        params = PoolingParams(0.9, 0.2)
        m_erlang = pooling_find_m(params, make_erlang(k))
        for first in range(1, k):
            for weight in (0.25, 0.5, 0.75):
                ph = make_hyper_erlang(first, k - first, weight)
                assert m_erlang <= pooling_find_m(params, ph)

    def test_central_only_rejected(self, exp_ph):
        """При λ ≤ p уровень m не определен."""
        with pytest.raises(ValidationError, match="λ > p"):
            pooling_find_m(PoolingParams(0.3, 0.5), exp_ph)

    @pytest.mark.parametrize("ph", [make_exponential(), make_hyperexp(10.0, 0.5)])
    def test_no_central_server(self, ph):
        """При p = 0 доля простоя стремится к 1−λ сверху, m не ограничен."""
        params = PoolingParams(0.8, 0.0)
        with pytest.raises(SolverError, match="не ограничен"):
            pooling_find_m(params, ph)
        with pytest.raises(SolverError, match="не ограничен"):
            pooling_solve(params, ph)

    def test_no_central_server_deterministic(self):
        """Детерминированная граница при p = 0 также не ограничена."""
        with pytest.raises(SolverError, match="не ограничен"):
            pooling_deterministic_min_m(PoolingParams(0.8, 0.0))


class TestPoolingSolve:
    """Неподвижная точка объединения ресурсов."""

    @pytest.mark.parametrize("row", POOLING_ROWS, ids=lambda r: r["ph"])
    def test_reference_limits(self, row):
        """Эталонные E[R] и невязки баланса ω и матрично-геометрической формы."""
        params, ph = row_params("pooling", row)
        solution = pooling_solve(params, ph)
        assert abs(solution.mean_response - row["limit"]) < 1e-4
        assert solution.omega_residual <= 1e-8
        assert solution.level_residual <= 1e-9

    def test_idle_matches_target(self, hyperexp10_ph):
        """Доля простоя в решении равна (1−λ)/(1−p)."""
        params = PoolingParams(0.8, 0.2)
        solution = pooling_solve(params, hyperexp10_ph)
        assert abs(solution.q_marginal[0] - params.idle_target) < 1e-9

    @pytest.mark.parametrize("lam, p", [(0.8, 0.3), (0.9, 0.2), (0.95, 0.1)])
    def test_exponential_omega_identity(self, exp_ph, lam, p):
        """Для экспоненциальных заданий ω = λπ_m/π_{m+1} − (1−p)."""
        solution = pooling_solve(PoolingParams(lam, p), exp_ph)
        m, pi = solution.m, solution.q_marginal
        expected = lam * pi[m] / pi[m + 1] - (1.0 - p)
        assert abs(solution.omega - expected) <= 1e-8 * max(1.0, solution.omega)

    def test_central_only(self, exp_ph):
        """При λ ≤ p очередь в полости пуста."""
        solution = pooling_solve(PoolingParams(0.3, 0.5), exp_ph)
        assert solution.regime == CENTRAL_ONLY
        assert solution.mean_response == 0.0
        assert solution.max_queue == 0

    def test_single_slot(self):
        """При p выше порога распределение очереди одно и то же для любых заданий."""
        params = PoolingParams(0.5, 0.3)
        target = params.idle_target
        for ph in (make_exponential(), make_erlang(5), make_hyper_erlang(2, 5, 0.25)):
            solution = pooling_solve(params, ph)
            assert solution.regime == SINGLE_SLOT
            assert solution.m == 0
            assert solution.max_queue == 1
            assert np.abs(solution.q_marginal - [target, 1.0 - target]).max() < 1e-9

    def test_to_dict(self, exp_ph):
        """Словарь результата для вывода."""
        data = pooling_solve(PoolingParams(0.8, 0.3), exp_ph).to_dict()
        assert data["policy"] == "pooling"
        assert data["regime"] == GENERAL
        assert data["m"] == 2
        assert len(data["pi_q"]) == 4
