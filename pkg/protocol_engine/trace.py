"""
Protocol trace: one line per handler invocation.

Line format: ``<time:.6f> <node> <event> <action> <reason>`` with ``-`` for no reason.
"""
import logging

logger = logging.getLogger('srps.trace')

TRACE_FORMAT = '%.6f %d %s %s %s'


def trace(now: float, node: int, event: str, action: str, reason=None):
    if logger.isEnabledFor(logging.INFO):
        logger.info(TRACE_FORMAT, now, node, event, action, reason.value if reason is not None else '-')
