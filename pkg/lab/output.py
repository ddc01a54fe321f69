"""
CSV and trace files written by the lab commands.

Every CSV has one header row, dot decimals and ``\\n`` line endings, and floats
are printed with a fixed format so that repeated invocations give identical bytes.
"""
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable

import pandas as pd

from simnet.exceptions import SimulationError

logger = logging.getLogger('srps.lab')

FLOAT_FORMAT = '%.10g'


def output_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SimulationError(f'cannot create output directory {out}: {e.strerror or e}') from e
    return out


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator='\n', float_format=FLOAT_FORMAT, na_rep='nan')
    logger.info('wrote %s (%d rows)', path, len(frame))
    return path


def drops_name(index: int) -> str:
    return f'run_{index:03d}_drops.csv'


def write_drops(out: Path, index: int, metrics) -> Path:
    return write_csv(metrics.drops_frame(), out / drops_name(index))


def summary_row(config, aggregate) -> dict:
    """Scenario echo followed by the mean and spread of every run metric."""
    return {**config.as_config(), **aggregate.summary_row()}


def write_summary(out: Path, rows: Iterable[dict], name: str = 'summary.csv') -> Path:
    return write_csv(pd.DataFrame(list(rows)), out / name)


def write_tables(out: Path, tables: dict[str, pd.DataFrame]) -> list[Path]:
    return [write_csv(frame, out / f'{name}.csv') for name, frame in tables.items()]


@contextmanager
def trace_to(path: Path):
    """Send the protocol trace to ``path`` for the duration of the block."""
    trace_logger = logging.getLogger('srps.trace')
    handler = logging.FileHandler(path, mode='w', encoding='utf-8')
    handler.setFormatter(logging.Formatter('%(message)s'))
    previous = trace_logger.level
    trace_logger.addHandler(handler)
    trace_logger.setLevel(logging.INFO)
    try:
        yield path
    finally:
        trace_logger.removeHandler(handler)
        trace_logger.setLevel(previous)
        handler.close()
