"""
What the lab commands do, free of argument parsing: analytic tables, seeded
simulations, parameter sweeps and their optional records in the database.
"""
import inspect
import logging
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import pandas as pd
from django.conf import settings
from django.db import transaction

from analysis.costs import CostParams
from analysis.curves import FIGURES, cost_tables
from simnet.exceptions import ConfigurationError
from simnet.runner import Aggregate, aggregate_runs, execute_inline
from simnet.scenario import CONFIG_KEYS, ScenarioConfig

from .config import parse_values
from .dispatch import execute_runs
from .models import Experiment, RunRecord
from .output import output_dir, summary_row, trace_to, write_csv, write_drops, write_summary, write_tables

logger = logging.getLogger('srps.lab')

ANALYSES = (*FIGURES, 'costs')


# ----------------------------------------------------------------- analyze

def _argument(key: str, text: str, kind: type):
    try:
        number = float(text)
        if kind is int:
            if not number.is_integer():
                raise ValueError(f'expected an integer, got {text!r}')
            return int(number)
        return number
    except ValueError as e:
        raise ConfigurationError(f'bad value for {key}: {e}', key=key) from e


def _sweep_number(text: str):
    number = float(text)
    return int(number) if number.is_integer() else number


def analysis_parameters(name: str) -> dict[str, type]:
    """Parameter names of one analysis and their annotated types."""
    if name not in ANALYSES:
        raise ConfigurationError(f'unknown figure {name!r}; expected one of {", ".join(ANALYSES)}')
    if name == 'costs':
        return {f.name: f.type for f in fields(CostParams)}
    return {p.name: p.annotation for p in inspect.signature(FIGURES[name]).parameters.values()}


def analysis_arguments(name: str, overrides: dict[str, str]) -> dict:
    """Keyword arguments for one analysis from ``--set`` strings, checked against what it accepts."""
    parameters = analysis_parameters(name)
    arguments = {}
    for key, text in overrides.items():
        if key not in parameters:
            raise ConfigurationError(f'{name} takes no parameter {key!r}; known: {", ".join(parameters)}', key=key)
        kind = parameters[key]
        if kind not in (int, float):
            try:
                arguments[key] = tuple(_sweep_number(v) for v in parse_values([text]))
            except ValueError as e:
                raise ConfigurationError(f'bad value for {key}: {text!r}', key=key) from e
            if not arguments[key]:
                raise ConfigurationError(f'{key} needs at least one value', key=key)
        else:
            arguments[key] = _argument(key, text, kind)
    return arguments


def analyze(name: str, out, overrides: Optional[dict[str, str]] = None) -> list[Path]:
    arguments = analysis_arguments(name, overrides or {})
    out = output_dir(out)
    if name == 'costs':
        return write_tables(out, cost_tables(CostParams(**arguments)))
    frame = FIGURES[name](**arguments)
    return [write_csv(frame, out / f'{name}.csv')]


# ---------------------------------------------------------------- simulate

@dataclass
class SimulationResult:
    config: ScenarioConfig
    aggregate: Aggregate
    paths: list


def traced_executor(out: Path) -> Callable:
    """Runs inline, each inside its own ``trace_run_NNN.log``."""
    def execute(config, indices):
        results = []
        for index in indices:
            with trace_to(out / f'trace_run_{index:03d}.log'):
                results.extend(execute_inline(config, [index]))
        return results
    return execute


def _executor(out: Path, trace: Optional[bool], dispatch: Optional[str]) -> Callable:
    if settings.SRPS_TRACE_ENABLED if trace is None else trace:
        return traced_executor(out)
    return lambda config, indices: execute_runs(config, indices, dispatch)


def simulate(config: ScenarioConfig, out, trace: Optional[bool] = None,
             dispatch: Optional[str] = None) -> SimulationResult:
    out = output_dir(out)
    aggregate = aggregate_runs(config, _executor(out, trace, dispatch))
    paths = [write_drops(out, index, metrics) for index, metrics in enumerate(aggregate.runs)]
    paths.append(write_csv(aggregate.per_run, out / 'runs.csv'))
    paths.append(write_summary(out, [summary_row(config, aggregate)]))
    logger.info('simulation of %d run(s) written to %s', config.runs, out)
    return SimulationResult(config, aggregate, paths)


# ------------------------------------------------------------------- sweep

@dataclass
class SweepResult:
    variable: str
    frame: pd.DataFrame
    points: list
    path: Path


def sweep_points(config: ScenarioConfig, variable: str, values: Sequence[str]) -> list[ScenarioConfig]:
    """One config per value, all checked before anything runs."""
    if variable not in CONFIG_KEYS:
        raise ConfigurationError(f'unknown key {variable!r}', key=variable)
    if variable == 'srps':
        raise ConfigurationError('every sweep already compares srps on and off', key=variable)
    if not values:
        raise ConfigurationError(f'no values given for {variable}', key=variable)
    return [config.with_overrides({variable: value}) for value in values]


def sweep(config: ScenarioConfig, variable: str, values: Sequence[str], out,
          dispatch: Optional[str] = None) -> SweepResult:
    points = sweep_points(config, variable, values)
    out = output_dir(out)
    rows, results = [], []
    for point in points:
        for srps in (True, False):
            case = replace(point, srps=srps)
            logger.info('sweep %s=%s srps=%s', variable, case.as_config()[variable], srps)
            aggregate = aggregate_runs(case, lambda c, indices: execute_runs(c, indices, dispatch))
            rows.append({'variable': variable, 'value': case.as_config()[variable], **summary_row(case, aggregate)})
            results.append((case, aggregate))
    frame = pd.DataFrame(rows)
    return SweepResult(variable, frame, results, write_csv(frame, out / f'sweep_{variable}.csv'))


# ----------------------------------------------------------------- records

def _json_safe(row: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in row.items()}


@transaction.atomic
def record_experiment(kind: str, config: ScenarioConfig, results, label: str = '') -> Experiment:
    """Persist the scenario and one record per run; ``results`` holds (config, aggregate) pairs."""
    experiment = Experiment.objects.create(
        kind=kind, label=label, config=_json_safe(config.as_config()),
        master_seed=config.master_seed, runs=config.runs,
    )
    records = []
    for case, aggregate in results:
        for index, metrics in enumerate(aggregate.runs):
            summary = _json_safe(metrics.summary())
            if kind == 'sweep':
                summary['scenario'] = _json_safe(case.as_config())
            records.append(RunRecord(
                experiment=experiment, run_index=index, seed=f'{case.master_seed}/{index}', srps=case.srps,
                metrics=summary,
            ))
    RunRecord.objects.bulk_create(records)
    logger.info('recorded %s experiment %s with %d run(s)', kind, experiment.id, len(records))
    return experiment
