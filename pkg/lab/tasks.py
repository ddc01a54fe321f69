import logging

from celery import shared_task

from simnet.runner import run_scenario, run_seed
from simnet.scenario import ScenarioConfig

logger = logging.getLogger('srps.lab')


@shared_task(name='lab.run_scenario')
def run_scenario_task(config_payload: dict, index: int) -> dict:
    """Run ``index`` of the scenario in ``config_payload`` (file keys, as written by ``as_config``)."""
    config = ScenarioConfig().with_overrides(config_payload)
    logger.info('worker run %d (srps=%s, m=%d)', index, config.srps, config.m_malicious)
    metrics = run_scenario(config, run_seed(config.master_seed, index))
    return metrics.to_payload()
