"""Pairwise key oracle standing in for the underlying key management protocol."""
from crypto_core.primitives import derive_key, encode_id


class KeyOracle:
    """Any two nodes can obtain their shared key; outsiders never see it."""

    def __init__(self, secret: bytes):
        self._secret = bytes(secret)
        self._cache: dict[tuple, bytes] = {}

    def shared_key(self, a: int, b: int) -> bytes:
        pair = (a, b) if a <= b else (b, a)
        key = self._cache.get(pair)
        if key is None:
            key = derive_key(self._secret, b'pair', encode_id(pair[0]), encode_id(pair[1]))
            self._cache[pair] = key
        return key

    def commitment_seed(self, node_id: int, epoch: int = 0) -> bytes:
        return derive_key(self._secret, b'seed', encode_id(node_id), epoch.to_bytes(4, 'big'))
