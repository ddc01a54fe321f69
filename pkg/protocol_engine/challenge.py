"""Nonce challenge an intermediate sends to a source to confirm a route request is genuine."""
import struct
from typing import Optional

from crypto_core.primitives import decrypt, encrypt

_LAYOUT = struct.Struct('>IIQ')
_NONCE_MASK = (1 << 64) - 1


def challenge_ciphertext(key: bytes, intermediate: int, source: int, nonce: int) -> bytes:
    """E_{K_SB}[ID_B | ID_S | r]."""
    return encrypt(key, _LAYOUT.pack(intermediate, source, nonce & _NONCE_MASK))


def open_challenge(key: bytes, ciphertext: bytes) -> Optional[tuple[int, int, int]]:
    plain = decrypt(key, ciphertext)
    if len(plain) != _LAYOUT.size:
        return None
    return _LAYOUT.unpack(plain)


def answer_challenge(key: bytes, ciphertext: bytes, source: int) -> Optional[bytes]:
    """Source side: prove knowledge of K_SB by returning r + 1 under the same key."""
    opened = open_challenge(key, ciphertext)
    if opened is None or opened[1] != source:
        return None
    intermediate, _, nonce = opened
    return challenge_ciphertext(key, intermediate, source, nonce + 1)


def response_valid(key: bytes, ciphertext: bytes, intermediate: int, source: int, nonce: int) -> bool:
    return open_challenge(key, ciphertext) == (intermediate, source, (nonce + 1) & _NONCE_MASK)
