"""
Командная строка: анализ очереди в полости, симуляция, таблицы и сетки.

Примеры:
    python app.py analyze --policy push --lambda 0.9 --delta 0.3 --ph exponential
    python app.py simulate --policy pooling --lambda 0.9 --p 0.5 --ph erlang:7 --n-servers 1000
    python app.py table 4 --scale desk --analytic-only
    python app.py sweep --policy push --vary lambda --range 0.5:0.99:50 --lambda 0.5 --delta 0.5 --ph hyperexp:10,0.5
"""
import argparse
import json
import logging
import math
import sys

import numpy as np
import pandas as pd

from src.config import (
    DEFAULT_ARRIVALS_PER_SERVER,
    DEFAULT_RUNS,
    DEFAULT_SEED,
    DEFAULT_WARMUP,
    DESK_N_GRID,
    FULL_N_GRID,
    TABLE_DECIMALS,
)
from src.data import get_table_settings
from src.phase_type import PhaseType, make_exponential, make_hyperexp, make_z_epsilon, timer_stats
from src.policy_pooling import PoolingParams
from src.policy_pull import PullParams
from src.policy_push import PushParams
from src.policy_waterfill import WaterfillParams
from src.report_generator import create_table_report
from src.simulator import POLICIES, SimConfig, cavity_solve, simulate
from src.validation import SolverError, ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ERROR = 2

SKIPPED = "skipped"
INVERSE_FRACTION = "inverse"
SWEEP_PARAMETERS = ('lambda', 'delta', 'scv', 'p', 'epsilon')
SWEEP_COLUMNS = ['x', 'ER', 'EQ', 'm_tilde', 'bound_lo', 'bound_hi', 'EQ_lo', 'EQ_hi', 'y']


class _ArgumentParser(argparse.ArgumentParser):
    """Ошибки разбора аргументов завершаются кодом 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: ошибка: {message}\n")


def _work_fraction(text):
    if text == INVERSE_FRACTION:
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается число или {INVERSE_FRACTION}, получено {text!r}")


def _add_model_args(parser):
    parser.add_argument('--policy', choices=POLICIES, required=True, help='политика балансировки')
    parser.add_argument('--lambda', dest='lam', type=float, required=True, help='нагрузка λ на сервер')
    parser.add_argument('--delta', type=float, help='интенсивность опроса δ (push, waterfill, pull)')
    parser.add_argument('--delta1', type=float, default=0.0, help='вероятность обновления при завершении (pull)')
    parser.add_argument('--delta0', type=float, help='интенсивность обновления простаивающего сервера (pull)')
    parser.add_argument('--p', type=float, help='доля центрального сервера (pooling)')
    parser.add_argument('--ph', default='exponential', help='распределение длительности заданий')


def _add_output_args(parser):
    parser.add_argument('-o', '--output', help='файл результата, по умолчанию stdout')
    parser.add_argument('--format', choices=('json', 'csv'), default='json', help='формат результата')


def build_parser():
    parser = _ArgumentParser(
        prog='cavity-lb',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description=__doc__.strip().splitlines()[0],
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='подробный лог (DEBUG)')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    analyze = sub.add_parser('analyze', help='решение очереди в полости')
    _add_model_args(analyze)
    _add_output_args(analyze)

    sim = sub.add_parser('simulate', help='симуляция системы из N серверов')
    _add_model_args(sim)
    _add_output_args(sim)
    sim.add_argument('--n-servers', type=int, required=True, help='число серверов N')
    sim.add_argument('--runs', type=int, default=DEFAULT_RUNS, help='число прогонов')
    sim.add_argument('--seed', type=int, default=DEFAULT_SEED, help='начальное зерно')
    sim.add_argument('--arrivals', type=int, help='число поступлений (по умолчанию N·10⁴)')
    sim.add_argument('--warmup', type=float, default=DEFAULT_WARMUP, help='доля разогрева')
    sim.add_argument('--C', dest='batch_constant', type=float, help='константа размера пакета (waterfill)')
    sim.add_argument('--trace', help='CSV-файл с трассами заданий')

    table = sub.add_parser('table', help='воспроизведение таблицы относительных ошибок')
    table.add_argument('number', type=int, choices=(1, 2, 3, 4), help='номер таблицы')
    table.add_argument('--scale', choices=('desk', 'full'), default='desk', help='сетка N')
    table.add_argument('--analytic-only', action='store_true', help='только столбец N → ∞')
    table.add_argument('--runs', type=int, default=DEFAULT_RUNS, help='число прогонов')
    table.add_argument('--seed', type=int, default=DEFAULT_SEED, help='начальное зерно')
    table.add_argument('--arrivals-per-server', type=int, default=DEFAULT_ARRIVALS_PER_SERVER,
                       help='поступлений на сервер')
    table.add_argument('-o', '--output', help='CSV-файл, по умолчанию stdout')
    table.add_argument('--docx', help='DOCX-отчет по таблице')

    sweep = sub.add_parser('sweep', help='сетка значений одного параметра')
    _add_model_args(sweep)
    sweep.add_argument('--vary', choices=SWEEP_PARAMETERS, required=True,
                       help='изменяемый параметр')
    grid = sweep.add_mutually_exclusive_group(required=True)
    grid.add_argument('--values', help='значения через запятую')
    grid.add_argument('--range', dest='grid_range', help='start:stop:num (равномерная сетка)')
    sweep.add_argument('--f', type=_work_fraction, default=0.5,
                       help='доля работы первой фазы для scv: число или inverse (f = 1/SCV)')
    sweep.add_argument('-o', '--output', help='CSV-файл, по умолчанию stdout')
    return parser


def build_params(policy, lam, delta=None, delta1=0.0, delta0=None, p=None):
    """
    Параметры политики из аргументов командной строки.

    Raises:
        ValidationError: Если не задан обязательный параметр
    """
    if policy in ('push', 'waterfill', 'pull') and delta is None and not (policy == 'pull' and delta0 is not None):
        raise ValidationError(f"Для политики {policy} требуется --delta")
    if policy == 'push':
        return PushParams(lam, delta)
    if policy == 'waterfill':
        return WaterfillParams(lam, delta)
    if policy == 'pull':
        if delta0 is not None:
            return PullParams(lam, delta1, delta0)
        return PullParams.from_total_rate(lam, delta, delta1)
    if policy == 'pooling':
        if p is None:
            raise ValidationError("Для политики pooling требуется --p")
        return PoolingParams(lam, p)
    raise ValidationError(f"Неизвестная политика: {policy}")


def row_params(policy, row):
    """
    Параметры политики и распределение для строки таблицы.

    Для pull суммарная интенсивность δ переводится в δ₀ = δ/(1−λ), δ₁ = 0.

    Returns:
        tuple: (params, PhaseType)
    """
    ph = PhaseType.from_spec(row['ph'])
    return build_params(policy, row['lam'], row.get('delta'), p=row.get('p')), ph


def _params_from_args(args):
    return build_params(args.policy, args.lam, args.delta, args.delta1, args.delta0, args.p)


def _flatten(record):
    flat = {}
    for key, value in record.items():
        flat[key] = json.dumps(value) if isinstance(value, (list, dict)) else value
    return flat


def write_output(record, output=None, fmt='json'):
    """Запись словаря результата в JSON или однострочный CSV."""
    if fmt == 'json':
        text = json.dumps(record, ensure_ascii=False, indent=2) + "\n"
    else:
        text = pd.DataFrame([_flatten(record)]).to_csv(index=False)
    if output:
        with open(output, 'w', encoding='utf-8') as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_frame(df, output=None):
    if output:
        df.to_csv(output, index=False)
    else:
        sys.stdout.write(df.to_csv(index=False))


def cmd_analyze(args):
    params = _params_from_args(args)
    ph = PhaseType.from_spec(args.ph)
    solution = cavity_solve(args.policy, params, ph)
    write_output(solution.to_dict(), args.output, args.format)
    return EXIT_OK


def cmd_simulate(args):
    params = _params_from_args(args)
    ph = PhaseType.from_spec(args.ph)
    config = SimConfig(
        policy=args.policy,
        params=params,
        ph=ph,
        n_servers=args.n_servers,
        arrivals_total=args.arrivals,
        warmup_fraction=args.warmup,
        runs=args.runs,
        seed=args.seed,
        batch_constant=args.batch_constant,
        trace_path=args.trace,
    )
    report = simulate(config)
    write_output(report.to_dict(), args.output, args.format)
    return EXIT_OK


def reproduce_table(number, scale='desk', analytic_only=False, runs=DEFAULT_RUNS,
                    seed=DEFAULT_SEED, arrivals_per_server=DEFAULT_ARRIVALS_PER_SERVER):
    """
    Строки таблицы относительных ошибок.

    Масштаб desk ограничивает N значением 10⁴, строки N = 10⁵ помечаются
    как skipped.

    Returns:
        tuple: (pandas.DataFrame, meta)
    """
    settings = get_table_settings(number)
    policy = settings['policy']
    grid = DESK_N_GRID if scale == 'desk' else FULL_N_GRID
    records = []
    for row in settings['rows']:
        params, ph = row_params(policy, row)
        limit = cavity_solve(policy, params, ph).mean_response
        for n in FULL_N_GRID:
            record = {
                'distribution': ph.describe(),
                'lambda': row['lam'],
                'param': row.get('delta', row.get('p')),
                'N': n,
                'limit': limit,
            }
            if policy == 'waterfill':
                record['C'] = row['C']
            if n not in grid:
                record.update(sim=SKIPPED, conf=SKIPPED, rel_err_pct=SKIPPED)
            elif analytic_only:
                record.update(sim=math.nan, conf=math.nan, rel_err_pct=math.nan)
            else:
                config = SimConfig(
                    policy=policy,
                    params=params,
                    ph=ph,
                    n_servers=n,
                    arrivals_total=n * arrivals_per_server,
                    runs=runs,
                    seed=seed,
                    batch_constant=row.get('C'),
                )
                report = simulate(config, cavity_prediction=limit)
                record.update(sim=report.mean_response, conf=report.ci_halfwidth,
                              rel_err_pct=report.relative_error_pct)
            if policy == 'waterfill':
                record['M'] = SimConfig(policy, params, ph, n, arrivals_total=0,
                                        batch_constant=row['C']).batch_geometry()[0]
            records.append(record)

    columns = ['distribution', 'lambda', 'param', 'C', 'M', 'N', 'sim', 'conf', 'limit', 'rel_err_pct']
    df = pd.DataFrame(records)
    df = df[[c for c in columns if c in df.columns]]
    meta = {'title': settings['title'], 'policy': policy, 'scale': scale, 'runs': runs, 'seed': seed}
    return df, meta


def _format_cell(value):
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.{TABLE_DECIMALS}f}"
    return value


def format_table(df):
    """Числа таблицы с фиксированным числом знаков, пропуски пустыми."""
    return df.apply(lambda col: col.map(_format_cell))


def cmd_table(args):
    df, meta = reproduce_table(args.number, args.scale, args.analytic_only, args.runs,
                               args.seed, args.arrivals_per_server)
    _write_frame(format_table(df), args.output)
    if args.docx:
        create_table_report(df, meta).save(args.docx)
        logger.info("DOCX-отчет сохранен: %s", args.docx)
    return EXIT_OK


def parse_grid(values=None, grid_range=None):
    """
    Сетка значений из списка через запятую или start:stop:num.

    Raises:
        ValidationError: Если сетка пуста или задана некорректно
    """
    try:
        if values is not None:
            grid = [float(v) for v in values.split(',') if v.strip()]
        elif grid_range is not None:
            start, stop, num = grid_range.split(':')
            grid = np.linspace(float(start), float(stop), int(num)).tolist()
        else:
            grid = []
    except ValueError as e:
        raise ValidationError(f"Некорректная сетка значений: {e}")
    if not grid:
        raise ValidationError("Сетка значений пуста")
    return grid


def _scv_ph(scv, f):
    fraction = 1.0 / scv if f == INVERSE_FRACTION else f
    if scv == 1.0 and fraction == 1.0:
        return make_exponential()
    return make_hyperexp(scv, fraction)


def sweep(policy, vary, grid, lam, delta=None, delta1=0.0, delta0=None, p=None, ph_spec='exponential', f=0.5):
    """
    Решения очереди в полости вдоль сетки одного параметра.

    bound_lo/bound_hi ограничивают E[R], EQ_lo/EQ_hi ограничивают E[Q].
    Для scv распределение HExp(x, f), f = 1/x при f = 'inverse';
    для epsilon распределение Z(x). Колонка y заполняется для push и water filling.

    Returns:
        pandas.DataFrame с колонками SWEEP_COLUMNS
    """
    if vary == 'p' and policy != 'pooling':
        raise ValidationError("Параметр p меняется только для политики pooling")
    if vary == 'delta' and policy == 'pooling':
        raise ValidationError("Для политики pooling параметр δ не используется")
    base_ph = None if vary in ('scv', 'epsilon') else PhaseType.from_spec(ph_spec)

    records = []
    for x in grid:
        kwargs = {'lam': lam, 'delta': delta, 'delta1': delta1, 'delta0': delta0, 'p': p}
        if vary == 'lambda':
            kwargs['lam'] = x
        elif vary == 'delta':
            kwargs['delta'] = x
            kwargs['delta0'] = None
        elif vary == 'p':
            kwargs['p'] = x
        if vary == 'scv':
            ph = _scv_ph(x, f)
        elif vary == 'epsilon':
            ph = make_z_epsilon(x)
        else:
            ph = base_ph
        params = build_params(policy, **kwargs)
        solution = cavity_solve(policy, params, ph)
        if policy == 'pooling':
            level, bounds = solution.m, (math.nan, math.nan)
        else:
            level, bounds = solution.m_tilde, solution.bounds
        y = timer_stats(ph, params.delta).y if policy in ('push', 'waterfill') else math.nan
        lam_x = params.lam
        records.append({
            'x': x,
            'ER': solution.mean_response,
            'EQ': solution.mean_queue,
            'm_tilde': level,
            'bound_lo': bounds[0] / lam_x if lam_x > 0.0 else math.nan,
            'bound_hi': bounds[1] / lam_x if lam_x > 0.0 else math.nan,
            'EQ_lo': bounds[0],
            'EQ_hi': bounds[1],
            'y': y,
        })
    return pd.DataFrame(records, columns=SWEEP_COLUMNS)


def cmd_sweep(args):
    grid = parse_grid(args.values, args.grid_range)
    df = sweep(args.policy, args.vary, grid, args.lam, args.delta, args.delta1, args.delta0,
               args.p, args.ph, args.f)
    _write_frame(df, args.output)
    return EXIT_OK


_COMMANDS = {
    'analyze': cmd_analyze,
    'simulate': cmd_simulate,
    'table': cmd_table,
    'sweep': cmd_sweep,
}


def main(argv=None):
    """
    Точка входа командной строки.

    Returns:
        int: код завершения (EXIT_OK, EXIT_USAGE или EXIT_ERROR)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, SolverError) as e:
        print(f"Ошибка: {e}", file=sys.stderr)
        return EXIT_ERROR
