import hashlib
import os

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from .chains import (
    ChainState, build_snv_chain, derive_commitment, max_requests, next_auth_key,
    snv_indices, snv_seed, verify_and_advance,
)
from .constants import HASH_BYTES, MAC_BYTES
from .exceptions import ChainExhausted, InvalidParameter
from .primitives import (
    decrypt, derive_key, encode_sn, encrypt, hash_chain, hash_f, mac,
    node_id_from_hardware, verify_mac,
)

SEED = bytes.fromhex('0011223344556677')


class HashFunctionTests(SimpleTestCase):
    def test_zero_applications_is_identity(self):
        self.assertEqual(hash_f(SEED, 0), SEED)

    def test_is_deterministic(self):
        self.assertEqual(hash_f(SEED), hash_f(SEED))

    def test_five_applications_match_plain_sha256(self):
        value = SEED
        for _ in range(5):
            value = hashlib.sha256(value).digest()[:8]
        self.assertEqual(hash_f(SEED, 5), value)
        self.assertEqual(len(value), HASH_BYTES)

    def test_negative_count_rejected(self):
        with self.assertRaises(InvalidParameter):
            hash_f(SEED, -1)

    def test_hash_chain_links(self):
        values = hash_chain(SEED, 6)
        self.assertEqual(len(values), 7)
        for previous, current in zip(values, values[1:]):
            self.assertEqual(hash_f(previous), current)


class CommitmentChainTests(SimpleTestCase):
    def test_commitment_of_length_two(self):
        chain = derive_commitment(SEED, 2)
        self.assertEqual(chain.current_commitment, hash_f(hash_f(SEED)))
        self.assertEqual(chain.disclosed_count, 0)

    def test_length_one_is_invalid(self):
        with self.assertRaises(InvalidParameter):
            derive_commitment(SEED, 1)

    def test_disclosures_walk_the_chain_backwards(self):
        chain = derive_commitment(SEED, 10)
        keys = [next_auth_key(chain) for _ in range(3)]
        self.assertEqual(keys, [hash_f(SEED, 9), hash_f(SEED, 8), hash_f(SEED, 7)])

    def test_first_key_hashes_onto_commitment(self):
        chain = derive_commitment(SEED, 3)
        commitment = chain.current_commitment
        key = next_auth_key(chain)
        self.assertEqual(key, hash_f(SEED, 2))
        self.assertEqual(hash_f(key), commitment)

    def test_successive_keys_are_linked(self):
        chain = derive_commitment(SEED, 4)
        keys = [next_auth_key(chain) for _ in range(4)]
        for older, newer in zip(keys, keys[1:]):
            self.assertEqual(hash_f(newer), older)
        self.assertEqual(keys[-1], SEED)

    def test_exhaustion(self):
        chain = derive_commitment(SEED, 2)
        next_auth_key(chain)
        next_auth_key(chain)
        self.assertTrue(chain.exhausted)
        with self.assertRaises(ChainExhausted):
            next_auth_key(chain)

    def test_current_commitment_tracks_disclosures(self):
        chain = ChainState(seed=SEED, length_t=6)
        for _ in range(6):
            next_auth_key(chain)
            self.assertEqual(chain.current_commitment, hash_f(SEED, chain.remaining))

    def test_replaying_every_disclosure_never_rejects(self):
        chain = derive_commitment(SEED, 32)
        stored = chain.current_commitment
        while not chain.exhausted:
            key = next_auth_key(chain)
            accepted, gap = verify_and_advance(stored, key, max_gap=1)
            self.assertTrue(accepted)
            self.assertEqual(gap, 1)
            stored = key
        self.assertEqual(stored, SEED)


class VerifyAndAdvanceTests(SimpleTestCase):
    def test_single_step(self):
        v = os.urandom(8)
        self.assertEqual(verify_and_advance(hash_f(v), v, 1), (True, 1))

    def test_two_steps(self):
        v = os.urandom(8)
        self.assertEqual(verify_and_advance(hash_f(v, 2), v, 2), (True, 2))

    def test_gap_beyond_bound_rejected(self):
        v = os.urandom(8)
        self.assertEqual(verify_and_advance(hash_f(v, 3), v, 2), (False, None))

    def test_unrelated_value_rejected(self):
        v, w = b'\x01' * 8, b'\x02' * 8
        self.assertFalse(verify_and_advance(hash_f(v), w, 4)[0])

    def test_zero_gap_is_invalid(self):
        with self.assertRaises(InvalidParameter):
            verify_and_advance(SEED, SEED, 0)

    @given(st.binary(min_size=8, max_size=8), st.integers(1, 6), st.integers(0, 4))
    def test_acceptance_is_monotone_in_max_gap(self, value, distance, extra):
        stored = hash_f(value, distance)
        accepted, gap = verify_and_advance(stored, value, distance)
        self.assertTrue(accepted)
        self.assertEqual(verify_and_advance(stored, value, distance + extra), (True, gap))


class MacTests(SimpleTestCase):
    def test_width_and_determinism(self):
        tag = mac(SEED, b'payload')
        self.assertEqual(len(tag), MAC_BYTES)
        self.assertEqual(tag, mac(SEED, b'payload'))

    def test_different_payloads_differ(self):
        self.assertNotEqual(mac(SEED, b'a'), mac(SEED, b'b'))

    def test_bit_flip_fuzz(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            payload = bytearray(rng.bytes(24))
            tag = mac(SEED, bytes(payload))
            bit = int(rng.integers(len(payload) * 8))
            payload[bit // 8] ^= 1 << (bit % 8)
            self.assertFalse(verify_mac(SEED, bytes(payload), tag))

    def test_wrong_key_fails(self):
        tag = mac(SEED, b'payload')
        self.assertFalse(verify_mac(b'\x00' * 8, b'payload', tag))

    def test_random_tags_never_accepted(self):
        rng = np.random.default_rng(11)
        payload = b'route request'
        accepted = sum(verify_mac(SEED, payload, rng.bytes(MAC_BYTES)) for _ in range(20000))
        self.assertEqual(accepted, 0)


class CipherTests(SimpleTestCase):
    @settings(max_examples=200)
    @given(st.binary(min_size=8, max_size=8), st.binary(max_size=40))
    def test_round_trip(self, key, message):
        self.assertEqual(decrypt(key, encrypt(key, message)), message)

    def test_endpoints_derive_the_same_seed(self):
        shared = derive_key(b'secret', b'pair', b'S', b'D')
        self.assertEqual(encrypt(shared, encode_sn(17)), encrypt(bytes(shared), encode_sn(17)))
        self.assertEqual(snv_seed(shared, 17), encrypt(shared, encode_sn(17)))

    def test_wrong_key_yields_garbage(self):
        ciphertext = encrypt(b'k' * 8, b'hello world')
        self.assertNotEqual(decrypt(b'x' * 8, ciphertext), b'hello world')

    def test_bulk_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            key = rng.bytes(8)
            message = rng.bytes(int(rng.integers(0, 33)))
            self.assertEqual(decrypt(key, encrypt(key, message)), message)


class SnvIndexTests(SimpleTestCase):
    def test_first_request(self):
        self.assertEqual(snv_indices(1, 10), (10, 9))

    def test_second_request(self):
        self.assertEqual(snv_indices(2, 10), (8, 7))

    def test_exhaustion(self):
        self.assertEqual(snv_indices(5, 10), (2, 1))
        self.assertIsNone(snv_indices(6, 10))
        self.assertEqual(max_requests(10), 5)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidParameter):
            snv_indices(0, 10)
        with self.assertRaises(InvalidParameter):
            snv_indices(1, 1)

    @given(st.integers(2, 500))
    def test_indices_step_by_two(self, n):
        previous = None
        i = 1
        while (indices := snv_indices(i, n)) is not None:
            req, rep = indices
            self.assertEqual(req - rep, 1)
            if previous is not None:
                self.assertEqual(previous - req, 2)
            previous = req
            i += 1
        self.assertGreater(i, n // 2)


class SnvChainTests(SimpleTestCase):
    def test_values_are_linked(self):
        chain = build_snv_chain(SEED, 5, 10)
        for i in range(1, 11):
            self.assertEqual(chain.values[i], hash_f(chain.values[i - 1]))

    def test_lazy_chain_matches_stored_chain(self):
        stored = build_snv_chain(SEED, 5, 12)
        lazy = build_snv_chain(SEED, 5, 12, keep_values=False)
        for i in (0, 1, 7, 12):
            self.assertEqual(stored.value_at(i), lazy.value_at(i))

    def test_reply_verifies_against_request(self):
        chain = build_snv_chain(SEED, 5, 10)
        req, rep = chain.current_indices()
        self.assertEqual(hash_f(chain.value_at(rep)), chain.value_at(req))

    def test_renewal_trigger(self):
        chain = build_snv_chain(SEED, 5, 10)
        for _ in range(3):
            self.assertFalse(chain.needs_renewal)
            chain.advance()
        # next request is (4, 3), the one after it (2, 1) is the last
        self.assertFalse(chain.needs_renewal)
        chain.advance()
        self.assertTrue(chain.needs_renewal)

    def test_renewed_chain_starts_one_below_the_top(self):
        chain = build_snv_chain(SEED, 9, 10, offset=1)
        self.assertEqual(chain.current_indices(), (9, 8))

    def test_index_out_of_range(self):
        with self.assertRaises(InvalidParameter):
            build_snv_chain(SEED, 1, 4).value_at(5)


class IdentityTests(SimpleTestCase):
    def test_hardware_ids_are_stable(self):
        address = bytes.fromhex('a0b1c2d3e4f5')
        self.assertEqual(node_id_from_hardware(address), node_id_from_hardware(address))
        self.assertLess(node_id_from_hardware(address), 2 ** 32)
