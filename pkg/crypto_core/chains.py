"""
Commitment chains for neighbourhood authentication and SN/SNV chains for
request-reply verification.

A commitment chain of length t anchored on ``seed`` publishes F^t(seed) and
then discloses F^(t-1)(seed), F^(t-2)(seed), ... ; every disclosed key hashes
forward onto the previous commitment.
"""
from dataclasses import dataclass, field
from typing import Optional

from .constants import DEFAULT_MAX_GAP
from .exceptions import ChainExhausted, InvalidParameter
from .primitives import encode_sn, encrypt, hash_chain, hash_f

MIN_CHAIN_LENGTH = 2


@dataclass
class ChainState:
    seed: bytes
    length_t: int
    disclosed_count: int = 0

    def __post_init__(self):
        if self.length_t < MIN_CHAIN_LENGTH:
            raise InvalidParameter(f'commitment chain length must be >= {MIN_CHAIN_LENGTH}, got {self.length_t}')
        if not 0 <= self.disclosed_count <= self.length_t:
            raise InvalidParameter('disclosed_count out of range')

    @property
    def current_commitment(self) -> bytes:
        # Recomputed from the seed: the memory/computation trade-off of short chains
        return hash_f(self.seed, self.length_t - self.disclosed_count)

    @property
    def remaining(self) -> int:
        return self.length_t - self.disclosed_count

    @property
    def exhausted(self) -> bool:
        return self.disclosed_count >= self.length_t


def derive_commitment(seed: bytes, t: int) -> ChainState:
    """K_commit = F^t(seed); nothing disclosed yet."""
    return ChainState(seed=bytes(seed), length_t=t)


def next_auth_key(chain: ChainState) -> bytes:
    """Disclose the next key, F^(t - disclosed - 1)(seed), and advance the chain."""
    if chain.exhausted:
        raise ChainExhausted(f'all {chain.length_t} keys of the chain were disclosed')
    key = hash_f(chain.seed, chain.length_t - chain.disclosed_count - 1)
    chain.disclosed_count += 1
    return key


def verify_and_advance(stored: bytes, candidate: bytes, max_gap: int = DEFAULT_MAX_GAP) -> tuple[bool, Optional[int]]:
    """
    Accept ``candidate`` iff F^k(candidate) == stored for some k in [1, max_gap].

    Returns (accepted, k). The caller replaces its stored value with the
    candidate on acceptance.
    """
    if max_gap < 1:
        raise InvalidParameter('max_gap must be at least 1')
    value = bytes(candidate)
    for k in range(1, max_gap + 1):
        value = hash_f(value)
        if value == stored:
            return True, k
    return False, None


def snv_indices(i: int, n: int) -> Optional[tuple[int, int]]:
    """
    Chain indices used by the i-th request of a pair: (request index, reply index).

    Returns None once the reply index would fall below 1.
    """
    if i < 1 or n < 2:
        raise InvalidParameter(f'snv_indices needs i >= 1 and n >= 2 (got i={i}, n={n})')
    req_idx = n - 2 * (i - 1)
    rep_idx = req_idx - 1
    if rep_idx < 1:
        return None
    return req_idx, rep_idx


def max_requests(n: int) -> int:
    return n // 2


@dataclass
class SnvChain:
    """Per (S, D) verification chain v_0..v_n, v_0 = E_{K_SD}[SN of the first request]."""
    sn: int
    v0: bytes
    length_n: int
    request_counter_i: int = 1
    keep_values: bool = True
    # 1 for a renewed chain: u_n is already stored on the route, requests start at u_(n-1)
    offset: int = 0
    _values: Optional[list[bytes]] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.length_n < 2:
            raise InvalidParameter('SNV chain length must be >= 2')
        if self.keep_values:
            self._values = hash_chain(self.v0, self.length_n)

    @property
    def values(self) -> list[bytes]:
        return self._values if self._values is not None else hash_chain(self.v0, self.length_n)

    def value_at(self, index: int) -> bytes:
        if not 0 <= index <= self.length_n:
            raise InvalidParameter(f'chain index {index} outside 0..{self.length_n}')
        if self._values is not None:
            return self._values[index]
        return hash_f(self.v0, index)

    def current_indices(self) -> Optional[tuple[int, int]]:
        return snv_indices(self.request_counter_i, self.length_n - self.offset)

    @property
    def exhausted(self) -> bool:
        return self.current_indices() is None

    @property
    def needs_renewal(self) -> bool:
        """True once only the final request of the chain (or nothing) is left."""
        if self.current_indices() is None:
            return True
        return snv_indices(self.request_counter_i + 1, self.length_n - self.offset) is None

    def advance(self):
        self.request_counter_i += 1


def build_snv_chain(shared_key: bytes, sn: int, n: int, keep_values: bool = True, offset: int = 0) -> SnvChain:
    """Both endpoints run this with K_SD and the first SN and get identical chains."""
    return SnvChain(sn=sn, v0=snv_seed(shared_key, sn), length_n=n, keep_values=keep_values, offset=offset)


def snv_seed(shared_key: bytes, sn: int) -> bytes:
    return encrypt(shared_key, encode_sn(sn))


