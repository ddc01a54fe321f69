"""
Guard coverage and detection probabilities.

Two nodes at distance x with range r share a lens-shaped region; every node
inside it overhears both and can guard the link. The expected lens area times
the density gives the expected number of guards, and binomial tails over
per-event observation probabilities give alert, detection and false alarm
rates.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .exceptions import DomainError

logger = logging.getLogger('srps.analysis')

# Area(r)/r² as rounded in the closed-form minimum guard count
AREA_MIN_COEFF = 0.36
SQRT3 = math.sqrt(3.0)

# Largest population summed with exact integer binomials; beyond it, log-space terms
_EXACT_LIMIT = 60


def _check_probability(name: str, p: float):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f'{name} must lie in [0, 1], got {p}')


def _area(x, r):
    return 2 * r * r * np.arccos(x / (2 * r)) - 2 * x * np.sqrt(np.maximum(r * r - x * x / 4, 0.0))


def area(x: float, r: float) -> float:
    """Common coverage of two nodes ``x`` apart, evaluated exactly as the closed form is printed."""
    if r <= 0:
        raise DomainError(f'range must be positive, got {r}')
    if x < 0 or x > 2 * r * (1 + 1e-12):
        raise DomainError(f'distance {x} outside [0, 2r] for r={r}')
    return float(_area(min(x, 2 * r), r))


def lens_area(x: float, r: float) -> float:
    """Geometric intersection of two discs of radius ``r`` whose centres are ``x`` apart."""
    if r <= 0 or x < 0 or x > 2 * r:
        raise DomainError(f'lens undefined for x={x}, r={r}')
    return float(2 * r * r * np.arccos(x / (2 * r)) - (x / 2) * np.sqrt(4 * r * r - x * x))


class ExpectedArea(NamedTuple):
    quadrature: float
    closed_form: float

    @property
    def gap(self) -> float:
        return self.quadrature - self.closed_form

    @property
    def relative_gap(self) -> float:
        return self.gap / self.closed_form if self.closed_form else 0.0


def expected_area(r: float) -> ExpectedArea:
    """Mean common coverage over x uniform in (0, r), by adaptive quadrature, next to the √3 r² closed form."""
    if r <= 0:
        raise DomainError(f'range must be positive, got {r}')
    value, error = integrate.quad(lambda x: _area(x, r) / r, 0.0, r, epsabs=0.0, epsrel=1e-10)
    logger.debug('E[Area] at r=%g: quadrature %.9g (+/- %.1e), closed form %.9g', r, value, error, SQRT3 * r * r)
    return ExpectedArea(float(value), SQRT3 * r * r)


@dataclass(frozen=True)
class GuardCounts:
    g_min: float
    g: float
    nb: float
    area_min: float

    @property
    def guards_per_neighbor(self) -> float:
        return self.g / self.nb if self.nb else 0.0


def guard_counts(r: float, d: float) -> GuardCounts:
    """Minimum and expected guards of a link and the mean neighbour count at density ``d``."""
    if r <= 0:
        raise DomainError(f'range must be positive, got {r}')
    if d < 0:
        raise DomainError(f'density must be non-negative, got {d}')
    return GuardCounts(
        g_min=AREA_MIN_COEFF * r * r * d,
        g=SQRT3 * r * r * d,
        nb=math.pi * r * r * d,
        area_min=area(r, r),
    )


def density_for(nb: float, r: float) -> float:
    """Density that gives ``nb`` neighbours on average at range ``r``."""
    if r <= 0 or nb < 0:
        raise DomainError(f'no density for nb={nb}, r={r}')
    return nb / (math.pi * r * r)


def expected_guards(nb: float) -> int:
    """Expected guard count for a mean neighbour count, rounded to whole guards."""
    return int(round(SQRT3 / math.pi * nb))


def linear_collision_probability(nb: float, base: float = 0.05, anchor_nb: float = 3.0, cap: float = 0.95) -> float:
    """Collision probability growing linearly with the neighbour count from ``base`` at ``anchor_nb``."""
    return min(base * nb / anchor_nb, cap)


def binomial_tail(n: int, k: int, p: float) -> float:
    """P[X >= k] for X ~ Binomial(n, p)."""
    _check_probability('p', p)
    if n < 0:
        raise DomainError(f'population must be non-negative, got {n}')
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    if n <= _EXACT_LIMIT:
        return math.fsum(math.comb(n, i) * p ** i * (1 - p) ** (n - i) for i in range(k, n + 1))
    i = np.arange(k, n + 1)
    log_terms = (special.gammaln(n + 1) - special.gammaln(i + 1) - special.gammaln(n - i + 1)
                 + i * math.log(p) + (n - i) * math.log1p(-p))
    return float(min(np.exp(special.logsumexp(log_terms)), 1.0))


def p_alert(alpha: float, beta: int, mu: int) -> float:
    """A guard raises an alert when it observes at least ``beta`` of ``mu`` malicious events."""
    _check_probability('alpha', alpha)
    if beta < 0 or mu < 0:
        raise DomainError(f'event counts must be non-negative (beta={beta}, mu={mu})')
    return binomial_tail(mu, beta, alpha)


class DetectionProbability(NamedTuple):
    binomial_sum: float
    beta_form: float

    @property
    def value(self) -> float:
        return self.binomial_sum


def p_detect(gamma: int, g: int, p: float) -> DetectionProbability:
    """At least ``gamma`` of ``g`` guards alert, each with probability ``p``; also as a regularized Beta."""
    _check_probability('p', p)
    if gamma < 0 or g < 0:
        raise DomainError(f'counts must be non-negative (gamma={gamma}, g={g})')
    total = binomial_tail(g, gamma, p)
    if gamma <= 0:
        beta_form = 1.0
    elif gamma > g:
        beta_form = 0.0
    else:
        beta_form = float(special.betainc(gamma, g - gamma + 1, p))
    return DetectionProbability(total, beta_form)


def p_exactly(gamma: int, g: int, p: float) -> float:
    """Exactly ``gamma`` of ``g`` guards alert."""
    _check_probability('p', p)
    if gamma < 0 or gamma > g:
        return 0.0
    return math.comb(g, gamma) * p ** gamma * (1 - p) ** (g - gamma)


@dataclass(frozen=True)
class CoverageParams:
    r: float = 30.0
    d: float = 0.0
    p_c: float = 0.05
    mu_events: int = 7
    beta_thresh: int = 5
    gamma_conf: int = 3

    def __post_init__(self):
        _check_probability('p_c', self.p_c)
        if self.r <= 0 or self.d < 0:
            raise DomainError(f'bad geometry r={self.r}, d={self.d}')

    @classmethod
    def from_nb(cls, nb: float, **kwargs) -> 'CoverageParams':
        r = kwargs.pop('r', cls.r)
        return cls(r=r, d=density_for(nb, r), **kwargs)

    @property
    def nb(self) -> float:
        return math.pi * self.r * self.r * self.d

    @property
    def alpha(self) -> float:
        return 1.0 - self.p_c

    @property
    def g_guards(self) -> int:
        return int(round(SQRT3 * self.r * self.r * self.d))

    def detection(self) -> float:
        return p_detect(self.gamma_conf, self.g_guards, p_alert(self.alpha, self.beta_thresh, self.mu_events)).value


class FalseAlarm(NamedTuple):
    p_fa: float
    p_fa_beta_mu: float
    p_fa_gamma: float


def p_false_alarm_curves(params: CoverageParams) -> FalseAlarm:
    """
    A guard wrongly blames a forwarder when it heard the packet go in and the
    forwarder received it, but missed the forward: p_c (1 - p_c)².
    """
    p_c = params.p_c
    p_fa = p_c * (1 - p_c) ** 2
    per_guard = binomial_tail(params.mu_events, params.beta_thresh, p_fa)
    return FalseAlarm(p_fa, per_guard, binomial_tail(params.g_guards, params.gamma_conf, per_guard))


class Misdetection(NamedTuple):
    # 1 - p_c, as the closed form reads
    printed: float
    # p_c: a guard misses an event only when it suffered a collision
    prose: float


def p_misdetection(p_c: float) -> Misdetection:
    _check_probability('p_c', p_c)
    return Misdetection(printed=1.0 - p_c, prose=p_c)


@dataclass(frozen=True)
class RequiredDensity:
    d: float
    nb: float
    g: int
    probability: float


def required_density(target: float, gamma: int, r: float = 30.0, alpha: float = 0.95, beta: int = 5,
                     mu: int = 7, max_guards: int = 10_000) -> RequiredDensity:
    """Smallest density whose expected guards detect with at least ``target`` probability."""
    _check_probability('target', target)
    per_guard = p_alert(alpha, beta, mu)
    for g in range(max(gamma, 0), max_guards + 1):
        probability = p_detect(gamma, g, per_guard).value
        if probability >= target:
            d = g / (SQRT3 * r * r)
            return RequiredDensity(d=d, nb=math.pi * r * r * d, g=g, probability=probability)
    raise DomainError(f'detection probability {target} unreachable with up to {max_guards} guards')


def monte_carlo_expected_area(r: float, samples: int, rng: np.random.Generator) -> float:
    """Sample mean of the closed-form Area(x) over x uniform in (0, r)."""
    x = rng.uniform(0.0, r, size=samples)
    return float(np.mean(_area(x, r)))


def monte_carlo_lens_overlap(r: float, samples: int, rng: np.random.Generator) -> float:
    """
    Hit-or-miss estimate of the mean true lens area over x uniform in (0, r):
    a point drawn uniformly in the first disc lands in the second one.
    """
    x = rng.uniform(0.0, r, size=samples)
    radius = r * np.sqrt(rng.uniform(0.0, 1.0, size=samples))
    angle = rng.uniform(0.0, 2 * math.pi, size=samples)
    px, py = radius * np.cos(angle), radius * np.sin(angle)
    hits = (px - x) ** 2 + py ** 2 <= r * r
    return float(np.mean(hits) * math.pi * r * r)


def monte_carlo_common_neighbors(r: float, d: float, samples: int, rng: np.random.Generator) -> float:
    """
    Mean number of nodes in the common coverage of two nodes at distance
    x ~ U(0, r), with node counts Poisson in the closed-form Area(x).
    """
    x = rng.uniform(0.0, r, size=samples)
    return float(np.mean(rng.poisson(d * _area(x, r))))
