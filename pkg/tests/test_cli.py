"""
Тесты для командной строки.
"""
import io
import json

import docx
import numpy as np
import pandas as pd
import pytest

from src.cli import build_params, main, parse_grid, reproduce_table, row_params, sweep, write_output
from src.data import PULL_ROWS, PUSH_ROWS, WATERFILL_ROWS
from src.phase_type import make_exponential, make_hyperexp, make_z_epsilon, timer_stats
from src.policy_pull import PullParams
from src.policy_push import PushParams, push_m_tilde, push_solve
from src.policy_waterfill import WaterfillParams, wf_solve
from src.validation import ValidationError


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    """Команда analyze."""

    def test_push(self, capsys):
        """Эталонное E[R] push для экспоненциальных заданий."""
        code, out, _ = _run(capsys, "analyze", "--policy", "push", "--lambda", "0.9", "--delta", "0.3")
        assert code == 0
        data = json.loads(out)
        assert abs(data["ER"] - 6.0081) < 1e-4

    def test_pull_erlang(self, capsys):
        """Pull с целым m̃ = 5 дает E[R] = 3."""
        code, out, _ = _run(capsys, "analyze", "--policy", "pull", "--lambda", "0.75", "--delta", "0.15",
                            "--ph", "erlang:3")
        assert code == 0
        assert abs(json.loads(out)["ER"] - 3.0) < 1e-9

    def test_csv_output(self, tmp_path, capsys):
        """Однострочный CSV, списки записаны как JSON."""
        path = tmp_path / "pooling.csv"
        code, _, _ = _run(capsys, "analyze", "--policy", "pooling", "--lambda", "0.8", "--p", "0.3",
                          "--format", "csv", "-o", str(path))
        assert code == 0
        df = pd.read_csv(path)
        assert abs(df.loc[0, "ER"] - 1.3958) < 1e-4
        assert json.loads(df.loc[0, "pi_q"])[0] == pytest.approx(0.2 / 0.7, abs=1e-9)

    def test_overload(self, capsys):
        """λ > 1 завершается кодом 2."""
        code, _, err = _run(capsys, "analyze", "--policy", "push", "--lambda", "1.2", "--delta", "0.3")
        assert code == 2
        assert "Ошибка" in err

    def test_missing_delta(self, capsys):
        """Без --delta water filling не считается."""
        code, _, err = _run(capsys, "analyze", "--policy", "waterfill", "--lambda", "0.5")
        assert code == 2
        assert "--delta" in err

    def test_bad_ph(self, capsys):
        """Неизвестное распределение завершается кодом 2."""
        code, _, _ = _run(capsys, "analyze", "--policy", "push", "--lambda", "0.5", "--delta", "0.3",
                          "--ph", "weibull:2")
        assert code == 2

    def test_pooling_without_central_server(self, capsys):
        """При p = 0 уровень m не ограничен, код 2."""
        code, _, err = _run(capsys, "analyze", "--policy", "pooling", "--lambda", "0.8", "--p", "0")
        assert code == 2
        assert "не ограничен" in err

    def test_unknown_option(self, capsys):
        """Неизвестный флаг завершается кодом 1."""
        code, _, _ = _run(capsys, "analyze", "--policy", "push", "--bogus")
        assert code == 1

    def test_no_command(self, capsys):
        """Без команды код 1."""
        code, _, _ = _run(capsys)
        assert code == 1


class TestOutputFormats:
    """Повторная запись прочитанного результата."""

    def test_json_round_trip(self, capsys):
        """JSON после разбора записывается теми же байтами."""
        code, out, _ = _run(capsys, "analyze", "--policy", "push", "--lambda", "0.85", "--delta", "0.5",
                            "--ph", "hyperexp:15,0.5")
        assert code == 0
        write_output(json.loads(out))
        assert capsys.readouterr().out == out

    def test_csv_round_trip(self, tmp_path, capsys):
        """CSV после чтения pandas записывается теми же байтами."""
        path = tmp_path / "pooling.csv"
        code, _, _ = _run(capsys, "analyze", "--policy", "pooling", "--lambda", "0.8", "--p", "0.3",
                          "--format", "csv", "-o", str(path))
        assert code == 0
        original = path.read_text(encoding="utf-8")
        df = pd.read_csv(path, float_precision="round_trip")
        assert df.to_csv(index=False) == original


class TestSimulate:
    """Команда simulate."""

    def test_small_run(self, capsys, single_worker):
        """Короткая симуляция pooling с пределом из таблицы."""
        code, out, _ = _run(capsys, "simulate", "--policy", "pooling", "--lambda", "0.8", "--p", "0.3",
                            "--n-servers", "20", "--arrivals", "2000", "--runs", "2")
        assert code == 0
        data = json.loads(out)
        assert data["N"] == 20
        assert len(data["per_run_means"]) == 2
        assert abs(data["cavity_prediction"] - 1.3958) < 1e-4

    def test_waterfill_geometry_error(self, capsys, single_worker):
        """Выборка больше N серверов отклоняется с кодом 2."""
        code, _, err = _run(capsys, "simulate", "--policy", "waterfill", "--lambda", "0.5", "--delta", "2",
                            "--n-servers", "10", "--C", "5", "--runs", "2")
        assert code == 2
        assert "превышает" in err


class TestTable:
    """Команда table и воспроизведение таблиц."""

    def test_pooling_limits(self, capsys):
        """Столбец N → ∞ таблицы 4 и пропуск N = 10⁵ на масштабе desk."""
        code, out, _ = _run(capsys, "table", "4", "--analytic-only")
        assert code == 0
        df = pd.read_csv(io.StringIO(out))
        limits = df.drop_duplicates("distribution")["limit"].tolist()
        assert limits == pytest.approx([1.3958, 1.0699, 1.2588, 2.0320], abs=1e-4)
        assert (df.loc[df["N"] == 100_000, "sim"] == "skipped").all()

    def test_waterfill_batch_size(self):
        """M = C·log₁₀N: C = 20, N = 1000 дают 60."""
        df, meta = reproduce_table(2, analytic_only=True)
        row = df[(df["N"] == 1000) & (df["C"] == 20)]
        assert row["M"].tolist() == [60]
        assert meta["policy"] == "waterfill"

    def test_full_scale_has_no_skipped(self):
        """Масштаб full не пропускает строк."""
        df, _ = reproduce_table(3, scale="full", analytic_only=True)
        assert not (df["sim"] == "skipped").any()
        assert len(df) == 16

    def test_limits_do_not_depend_on_seed(self):
        """Столбец N → ∞ не зависит от зерна."""
        first, _ = reproduce_table(1, analytic_only=True, seed=1)
        second, _ = reproduce_table(1, analytic_only=True, seed=99)
        assert first["limit"].tolist() == second["limit"].tolist()

    def test_docx(self, tmp_path, capsys):
        """DOCX-отчет с заголовком и 16 строками таблицы."""
        path = tmp_path / "table1.docx"
        code, _, _ = _run(capsys, "table", "1", "--analytic-only", "--docx", str(path))
        assert code == 0
        document = docx.Document(str(path))
        assert len(document.tables) == 1
        assert len(document.tables[0].rows) == 17

    def test_bad_number(self, capsys):
        """Номер таблицы вне 1..4 завершается кодом 1."""
        code, _, _ = _run(capsys, "table", "7")
        assert code == 1


class TestRowParams:
    """Параметры строки таблицы."""

    def test_pull_total_rate(self):
        """Для pull δ = 0.15 при λ = 0.75 пересчитывается в δ₀ = 0.6."""
        params, ph = row_params("pull", PULL_ROWS[2])
        assert isinstance(params, PullParams)
        assert params.delta1 == 0.0
        assert abs(params.delta0 - 0.6) < 1e-12
        assert ph.n_s == 3

    def test_waterfill(self):
        """Строка water filling дает (λ, δ) без константы C."""
        params, _ = row_params("waterfill", WATERFILL_ROWS[0])
        assert params == WaterfillParams(0.8, 0.4)

    def test_unknown_policy(self):
        """Неизвестная политика отклоняется."""
        with pytest.raises(ValidationError, match="Неизвестная политика"):
            row_params("jsq", PUSH_ROWS[0])


class TestSweep:
    """Команда sweep."""

    def test_parse_grid(self):
        """Список через запятую и равномерная сетка."""
        assert parse_grid("0.5, 0.6,0.7") == [0.5, 0.6, 0.7]
        assert parse_grid(grid_range="0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_empty_grid(self, capsys):
        """Пустая сетка завершается кодом 2."""
        code, _, err = _run(capsys, "sweep", "--policy", "push", "--lambda", "0.5", "--delta", "0.3",
                            "--vary", "lambda", "--values", ",")
        assert code == 2
        assert "пуста" in err

    def test_bad_range(self):
        """Диапазон без числа точек отклоняется."""
        with pytest.raises(ValidationError):
            parse_grid(grid_range="0.1:0.9")

    def test_push_bounds(self, capsys):
        """Колонки границ E[Q] охватывают EQ, E[R] растет с λ."""
        code, out, _ = _run(capsys, "sweep", "--policy", "push", "--lambda", "0.5", "--delta", "0.5",
                            "--vary", "lambda", "--values", "0.5,0.7,0.9", "--ph", "hyperexp:10,0.5")
        assert code == 0
        df = pd.read_csv(io.StringIO(out))
        assert len(df) == 3
        assert (df["EQ_lo"] <= df["EQ"] + 1e-9).all()
        assert (df["EQ"] <= df["EQ_hi"] + 1e-9).all()
        assert df["ER"].is_monotonic_increasing

    def test_response_between_bounds(self):
        """Кривая E[R] лежит между bound_lo и bound_hi для λ ∈ [0.5, 1)."""
        grid = np.linspace(0.5, 0.95, 10).tolist()
        df = sweep("push", "lambda", grid, lam=0.5, delta=0.5, ph_spec="hyperexp:10,0.5")
        assert (df["bound_lo"] <= df["ER"] + 1e-9).all()
        assert (df["ER"] <= df["bound_hi"] + 1e-9).all()
        assert np.allclose(df["bound_lo"] * df["x"], df["EQ_lo"])
        assert np.allclose(df["bound_hi"] * df["x"], df["EQ_hi"])

    def test_response_bounds_single_point(self):
        """При λ = 0.5 колонки границ совпадают с границами E[Q], деленными на λ."""
        df = sweep("push", "lambda", [0.5], lam=0.5, delta=0.5, ph_spec="hyperexp:10,0.5")
        solution = push_solve(PushParams(0.5, 0.5), make_hyperexp(10.0, 0.5))
        lo, hi = solution.bounds
        assert df.loc[0, "bound_lo"] == pytest.approx(lo / 0.5, abs=1e-12)
        assert df.loc[0, "bound_hi"] == pytest.approx(hi / 0.5, abs=1e-12)
        assert df.loc[0, "bound_lo"] <= solution.mean_response <= df.loc[0, "bound_hi"]

    def test_pooling_scv(self):
        """Для pooling в колонке m_tilde целый уровень m, границ нет."""
        df = sweep("pooling", "scv", [2.0, 5.0, 10.0], lam=0.8, p=0.3)
        assert (df["m_tilde"] >= 1).all()
        assert df["bound_lo"].isna().all()
        assert df["y"].isna().all()

    def test_pooling_level_grows_with_scv(self):
        """При f = 1/2 уровень m не убывает с ростом SCV."""
        df = sweep("pooling", "scv", [1.0, 5.0, 20.0], lam=0.9, p=0.25)
        assert df["m_tilde"].is_monotonic_increasing

    def test_inverse_fraction(self):
        """При f = inverse сетка SCV использует HExp(SCV, 1/SCV)."""
        df = sweep("push", "scv", [1.0, 10.0], lam=0.9, delta=0.5, f="inverse")
        params = PushParams(0.9, 0.5)
        expected = push_m_tilde(params, timer_stats(make_hyperexp(10.0, 0.1), 0.5).y)
        assert df.loc[1, "m_tilde"] == pytest.approx(expected, abs=1e-12)
        assert df.loc[0, "m_tilde"] == pytest.approx(
            push_m_tilde(params, timer_stats(make_exponential(), 0.5).y), abs=1e-12)
        halves = sweep("push", "scv", [10.0], lam=0.9, delta=0.5, f=0.5)
        assert abs(halves.loc[0, "m_tilde"] - expected) > 1e-6

    def test_inverse_fraction_flag(self, capsys):
        """Флаг --f inverse принимается, нечисловое значение дает код 1."""
        code, out, _ = _run(capsys, "sweep", "--policy", "push", "--lambda", "0.9", "--delta", "0.5",
                            "--vary", "scv", "--values", "2,4", "--f", "inverse")
        assert code == 0
        assert len(pd.read_csv(io.StringIO(out))) == 2
        code, _, _ = _run(capsys, "sweep", "--policy", "push", "--lambda", "0.9", "--delta", "0.5",
                          "--vary", "scv", "--values", "2", "--f", "half")
        assert code == 1

    def test_waterfill_epsilon(self):
        """Сетка ε для water filling: E[R] от Z(ε), y растет при ε → 0."""
        df = sweep("waterfill", "epsilon", [0.5, 0.25, 0.1], lam=0.8, delta=0.5)
        assert df["y"].is_monotonic_increasing
        assert df.loc[0, "y"] == pytest.approx(1.0 / 1.5, abs=1e-12)
        expected = wf_solve(WaterfillParams(0.8, 0.5), make_z_epsilon(0.1)).mean_response
        assert df.loc[2, "ER"] == pytest.approx(expected, abs=1e-12)

    def test_epsilon_flag(self, capsys):
        """Флаг --vary epsilon."""
        code, out, _ = _run(capsys, "sweep", "--policy", "waterfill", "--lambda", "0.8", "--delta", "0.5",
                            "--vary", "epsilon", "--values", "0.5,0.25")
        assert code == 0
        df = pd.read_csv(io.StringIO(out))
        assert list(df["x"]) == [0.5, 0.25]

    def test_p_for_push(self):
        """Параметр p меняется только у pooling."""
        with pytest.raises(ValidationError, match="pooling"):
            sweep("push", "p", [0.1], lam=0.5, delta=0.3)

    def test_build_params_pull(self):
        """Pull из суммарной δ или напрямую из δ₀ и δ₁."""
        params = build_params("pull", 0.75, delta=0.15)
        assert abs(params.delta0 - 0.6) < 1e-12
        direct = build_params("pull", 0.75, delta1=0.2, delta0=0.4)
        assert direct.delta0 == 0.4
