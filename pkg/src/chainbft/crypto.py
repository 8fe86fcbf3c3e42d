"""Signature schemes and per-replica key material.

Two schemes are provided. ``secp256k1`` is ECDSA over the secp256k1 curve with
deterministic (RFC 6979) nonces. ``null`` is a keyed BLAKE2b tag: it binds the
signer and the message but offers no security, and exists so large
deterministic simulations stay fast.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .core import (
    QuorumCertificate,
    TimeoutCertificate,
    quorum_size,
    timeout_message,
    vote_message,
)


class SignatureScheme:
    name = "abstract"

    def generate(self, seed: int) -> tuple[object, bytes]:
        """Return (private key, public key bytes) derived from ``seed``."""
        raise NotImplementedError

    def sign(self, message: bytes, private) -> bytes:
        raise NotImplementedError

    def verify(self, message: bytes, sig: bytes, public: bytes) -> bool:
        raise NotImplementedError


class NullScheme(SignatureScheme):
    name = "null"

    def generate(self, seed: int):
        key = hashlib.blake2b(seed.to_bytes(8, "big", signed=True), digest_size=16).digest()
        return key, key

    def sign(self, message: bytes, private) -> bytes:
        return hashlib.blake2b(message, key=private, digest_size=16).digest()

    def verify(self, message: bytes, sig: bytes, public: bytes) -> bool:
        return len(sig) == 16 and hashlib.blake2b(message, key=public, digest_size=16).digest() == sig


_CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141


class Secp256k1Scheme(SignatureScheme):
    name = "secp256k1"
    _algo = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)

    def generate(self, seed: int):
        scalar = int.from_bytes(hashlib.sha256(b"chainbft-key" + seed.to_bytes(8, "big", signed=True)).digest(), "big")
        private = ec.derive_private_key(scalar % (_CURVE_ORDER - 1) + 1, ec.SECP256K1())
        public = private.public_key().public_bytes(Encoding.X962, PublicFormat.CompressedPoint)
        return private, public

    def sign(self, message: bytes, private) -> bytes:
        return private.sign(message, self._algo)

    def verify(self, message: bytes, sig: bytes, public: bytes) -> bool:
        try:
            key = _load_public(public)
            key.verify(sig, message, self._algo)
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True


@lru_cache(maxsize=1024)
def _load_public(public: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), public)


SCHEMES = {"null": NullScheme, "secp256k1": Secp256k1Scheme}


def get_scheme(name: str) -> SignatureScheme:
    try:
        return SCHEMES[name]()
    except KeyError:
        raise ValueError(f"unknown signature scheme {name!r}") from None


@dataclass
class Keyring:
    """Static key material of one replica: its own private key and everyone's public keys."""

    scheme: SignatureScheme
    me: int
    private: object
    publics: tuple[bytes, ...]

    @property
    def n(self) -> int:
        return len(self.publics)

    def sign(self, message: bytes) -> bytes:
        return self.scheme.sign(message, self.private)

    def verify(self, signer: int, message: bytes, sig: bytes) -> bool:
        if not 0 <= signer < len(self.publics):
            return False
        return self.scheme.verify(message, sig, self.publics[signer])

    def verify_qc(self, qc: QuorumCertificate, genesis_id: bytes) -> bool:
        if qc.view == 0:
            return not qc.sigs and qc.block == genesis_id
        return self._verify_aggregate(qc.sigs, vote_message(qc.view, qc.block))

    def verify_tc(self, tc: TimeoutCertificate) -> bool:
        return self._verify_aggregate(tc.sigs, timeout_message(tc.view))

    def _verify_aggregate(self, sigs, message: bytes) -> bool:
        if len(sigs) < quorum_size(self.n):
            return False
        last = -1
        for signer, sig in sigs:
            # strictly ascending signer ids also rules out duplicates
            if signer <= last or not self.verify(signer, message, sig):
                return False
            last = signer
        return True


def make_keyrings(n: int, scheme: str | SignatureScheme = "null", seed: int = 0) -> list[Keyring]:
    if isinstance(scheme, str):
        scheme = get_scheme(scheme)
    pairs = [scheme.generate(seed * 100_003 + i) for i in range(n)]
    publics = tuple(pub for _, pub in pairs)
    return [Keyring(scheme, i, priv, publics) for i, (priv, _) in enumerate(pairs)]
