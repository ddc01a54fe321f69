"""Fans simulation runs out inline or to Celery workers; results always come back in run order."""
import logging
from typing import Optional, Sequence

from celery import group
from django.conf import settings

from simnet.exceptions import ConfigurationError
from simnet.metrics import RunMetrics
from simnet.runner import execute_inline

from .tasks import run_scenario_task

logger = logging.getLogger('srps.lab')

DISPATCH_MODES = ('inline', 'celery')


def dispatch_mode(mode: Optional[str] = None) -> str:
    mode = (mode or getattr(settings, 'SRPS_DISPATCH', 'inline')).lower()
    if mode not in DISPATCH_MODES:
        raise ConfigurationError(f'SRPS_DISPATCH must be one of {", ".join(DISPATCH_MODES)}, got {mode!r}')
    return mode


def execute_celery(config, indices: Sequence[int]) -> list[RunMetrics]:
    payload = config.as_config()
    job = group(run_scenario_task.s(payload, index) for index in indices)
    logger.info('dispatching %d runs to workers', len(indices))
    # group results keep the order of their signatures
    payloads = job.apply_async().get(disable_sync_subtasks=False)
    return [RunMetrics.from_payload(p) for p in payloads]


def execute_runs(config, indices: Sequence[int], mode: Optional[str] = None) -> list[RunMetrics]:
    if dispatch_mode(mode) == 'celery':
        return execute_celery(config, indices)
    return execute_inline(config, indices)
