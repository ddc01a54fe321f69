"""Tables behind the analytic figures: detection and false alarm against neighbour count, detection against γ."""
from typing import Iterable

import pandas as pd

from .costs import CostParams, compute_cost, memory_cost, packet_sizes
from .coverage import (
    CoverageParams, expected_guards, linear_collision_probability, p_alert, p_detect, p_false_alarm_curves,
)

NB_SWEEP = tuple(range(3, 41))
GAMMA_SWEEP = tuple(range(1, 11))


def _wormhole(p_node: float, m: int) -> float:
    """A wormhole breaks as soon as any one of its ``m`` endpoints is detected."""
    return 1.0 - (1.0 - p_node) ** m if m >= 2 else 0.0


def _detection_row(nb: float, gamma: int, mu: int, beta: int, p_c: float, m: int) -> dict:
    g = expected_guards(nb)
    alert = p_alert(1.0 - p_c, beta, mu)
    node = p_detect(gamma, g, alert)
    return {
        'p_c': p_c,
        'g': g,
        'p_alert': alert,
        'p_detect': node.binomial_sum,
        'p_detect_beta': node.beta_form,
        'p_detect_wormhole': _wormhole(node.binomial_sum, m),
    }


def fig9a(nb_values: Iterable[float] = NB_SWEEP, mu: int = 7, beta: int = 5, gamma: int = 3,
          pc_base: float = 0.05, pc_anchor_nb: float = 3.0, m: int = 2) -> pd.DataFrame:
    """Detection probability as the neighbour count grows and collisions grow with it."""
    rows = []
    for nb in nb_values:
        p_c = linear_collision_probability(nb, pc_base, pc_anchor_nb)
        rows.append({'nb': nb, **_detection_row(nb, gamma, mu, beta, p_c, m)})
    return pd.DataFrame(rows, columns=['nb', 'p_c', 'g', 'p_alert', 'p_detect', 'p_detect_beta', 'p_detect_wormhole'])


def fig9b(nb_values: Iterable[float] = NB_SWEEP, mu: int = 7, beta: int = 5, gamma: int = 3,
          pc_base: float = 0.05, pc_anchor_nb: float = 3.0, r: float = 30.0) -> pd.DataFrame:
    """False alarm probabilities over the same neighbour sweep."""
    rows = []
    for nb in nb_values:
        p_c = linear_collision_probability(nb, pc_base, pc_anchor_nb)
        params = CoverageParams.from_nb(nb, r=r, p_c=p_c, mu_events=mu, beta_thresh=beta, gamma_conf=gamma)
        fa = p_false_alarm_curves(params)
        rows.append({'nb': nb, 'p_c': p_c, 'g': params.g_guards, 'p_fa': fa.p_fa,
                     'p_fa_beta_mu': fa.p_fa_beta_mu, 'p_fa_gamma': fa.p_fa_gamma})
    return pd.DataFrame(rows, columns=['nb', 'p_c', 'g', 'p_fa', 'p_fa_beta_mu', 'p_fa_gamma'])


def fig12_analytic(gamma_values: Iterable[int] = GAMMA_SWEEP, nb: float = 15, mu: int = 7, beta: int = 5,
                   pc_base: float = 0.05, pc_anchor_nb: float = 3.0, m: int = 2) -> pd.DataFrame:
    """Detection probability against the confidence index at a fixed neighbour count."""
    p_c = linear_collision_probability(nb, pc_base, pc_anchor_nb)
    rows = [{'gamma': gamma, **_detection_row(nb, gamma, mu, beta, p_c, m)} for gamma in gamma_values]
    return pd.DataFrame(rows, columns=['gamma', 'p_c', 'g', 'p_alert', 'p_detect', 'p_detect_beta',
                                       'p_detect_wormhole'])


def cost_tables(params: CostParams = CostParams()) -> dict[str, pd.DataFrame]:
    """Memory, packet and compute tables, each ready for one CSV."""
    memory = pd.DataFrame([{
        'nn': params.nn, 'lc': params.lc, 'rte': params.rte, 'nbe': params.nbe, 'bytes': memory_cost(params),
    }])
    packets = pd.DataFrame(
        [{'packet': s.name, 'modelled_bytes': s.modelled, 'engine_bytes': s.engine, 'deviation': s.deviation,
          'note': s.note} for s in packet_sizes(params).values()]
    )
    compute = pd.DataFrame(
        [{'role': role.value, 'mac_ops': macs, 'hash_ops': hashes} for role, (macs, hashes) in compute_cost().items()]
    )
    return {'costs_memory': memory, 'costs_packets': packets, 'costs_compute': compute}


FIGURES = {
    'fig9a': fig9a,
    'fig9b': fig9b,
    'fig12': fig12_analytic,
}
