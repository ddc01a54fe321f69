"""Single runs and their aggregation over independently seeded repetitions."""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from .metrics import RunMetrics
from .simulator import Simulation

logger = logging.getLogger('srps.simnet')


def run_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed of run ``index``; identical to ``SeedSequence(master_seed).spawn(...)[index]``."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def run_seeds(config) -> list[np.random.SeedSequence]:
    return [run_seed(config.master_seed, i) for i in range(config.runs)]


def run_scenario(config, seed=None, topology=None) -> RunMetrics:
    """One run; ``seed`` defaults to the config's master seed."""
    return Simulation(config, config.master_seed if seed is None else seed, topology).run()


def execute_inline(config, indices: Sequence[int]) -> list[RunMetrics]:
    results = []
    for index in indices:
        logger.info('run %d/%d (srps=%s, m=%d)', index + 1, config.runs, config.srps, config.m_malicious)
        results.append(run_scenario(config, run_seed(config.master_seed, index)))
    return results


@dataclass
class Aggregate:
    per_run: pd.DataFrame
    mean: pd.Series
    std: pd.Series
    runs: list

    def summary_row(self) -> dict:
        """Mean and population standard deviation of every per-run metric."""
        row = {}
        for column in self.mean.index:
            row[f'{column}_mean'] = self.mean[column]
            row[f'{column}_std'] = self.std[column]
        return row


def aggregate_runs(config, execute: Optional[Callable] = None) -> Aggregate:
    """
    Run ``config.runs`` repetitions and summarise them.

    ``execute(config, indices)`` runs the given run indices and returns their
    metrics in the same order; the default runs them in this process.
    """
    execute = execute or execute_inline
    results = list(execute(config, list(range(config.runs))))
    frame = pd.DataFrame([m.summary() for m in results])
    frame.insert(0, 'run', range(len(results)))
    values = frame.drop(columns='run')
    return Aggregate(per_run=frame, mean=values.mean(), std=values.std(ddof=0), runs=results)
