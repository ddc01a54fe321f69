"""
One-way function F, MAC tags and the keyed cipher E.

All functions are pure; widths come from ``crypto_core.constants``.
"""
import hashlib
import hmac
import struct
from functools import lru_cache

from cryptography.hazmat.primitives import hashes, padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .constants import HASH_BYTES, ID_BYTES, KEY_BYTES, MAC_BYTES
from .exceptions import InvalidParameter

_AES_BLOCK_BITS = 128


def hash_f(value: bytes, times: int = 1, width: int = HASH_BYTES) -> bytes:
    """Apply F ``times`` times; F is SHA-256 truncated to ``width`` bytes."""
    if times < 0:
        raise InvalidParameter(f'cannot apply F a negative number of times ({times})')
    out = bytes(value)
    for _ in range(times):
        out = hashlib.sha256(out).digest()[:width]
    return out


def hash_chain(seed: bytes, length: int, width: int = HASH_BYTES) -> list[bytes]:
    """Return [v_0, v_1, ..., v_length] with v_i = F(v_{i-1})."""
    values = [bytes(seed)]
    for _ in range(length):
        values.append(hash_f(values[-1], width=width))
    return values


def mac(key: bytes, payload: bytes) -> bytes:
    """Keyed hash over the payload, truncated to the 10-byte tag width."""
    return hmac.new(key, payload, hashlib.sha256).digest()[:MAC_BYTES]


def verify_mac(key: bytes, payload: bytes, tag: bytes) -> bool:
    return hmac.compare_digest(mac(key, payload), tag)


@lru_cache(maxsize=4096)
def _expand(key: bytes) -> tuple[bytes, bytes]:
    # 8-byte lab keys stretched to an AES-128 key and a fixed IV
    material = HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=b'srps-cipher-e',
    ).derive(key)
    return material[:16], material[16:]


def encrypt(key: bytes, plaintext: bytes) -> bytes:
    """Deterministic E_key[plaintext]; both endpoints derive identical output."""
    aes_key, iv = _expand(bytes(key))
    padder = padding.PKCS7(_AES_BLOCK_BITS).padder()
    padded = padder.update(plaintext) + padder.finalize()
    encryptor = Cipher(algorithms.AES(aes_key), modes.CBC(iv)).encryptor()
    return encryptor.update(padded) + encryptor.finalize()


def decrypt(key: bytes, ciphertext: bytes) -> bytes:
    """Invert ``encrypt``. A wrong key yields garbage bytes, never an exception."""
    aes_key, iv = _expand(bytes(key))
    if not ciphertext or len(ciphertext) % (_AES_BLOCK_BITS // 8):
        return bytes(ciphertext)
    decryptor = Cipher(algorithms.AES(aes_key), modes.CBC(iv)).decryptor()
    raw = decryptor.update(ciphertext) + decryptor.finalize()
    unpadder = padding.PKCS7(_AES_BLOCK_BITS).unpadder()
    try:
        return unpadder.update(raw) + unpadder.finalize()
    except ValueError:
        return raw


def encode_id(node_id: int) -> bytes:
    return struct.pack('>I', node_id)


def encode_sn(sn: int) -> bytes:
    return struct.pack('>I', sn)


def node_id_from_hardware(hardware_address: bytes) -> int:
    """Identity mode where ID_X = F(hardware address of X), cut to the ID width."""
    digest = hashlib.sha256(hardware_address).digest()[:ID_BYTES]
    return struct.unpack('>I', digest)[0]


def derive_key(secret: bytes, *labels: bytes) -> bytes:
    """Derive an 8-byte symmetric key from a secret and a label sequence."""
    return hmac.new(secret, b'|'.join(labels), hashlib.sha256).digest()[:KEY_BYTES]


