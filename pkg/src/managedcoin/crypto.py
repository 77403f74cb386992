"""Signature schemes behind a scheme identifier.

The reference scheme is ECDSA over secp256k1 with RFC 6979 nonces and
33-byte compressed public keys.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache

import coincurve

DEFAULT_SCHEME = "secp256k1"


@lru_cache(maxsize=4096)
def _secret(private: bytes) -> coincurve.PrivateKey:
    # building the libsecp256k1 keypair costs about as much as a signature
    return coincurve.PrivateKey(private)


class Secp256k1:
    scheme_id = "secp256k1"
    order = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

    def private_from_seed(self, seed: int) -> bytes:
        counter = 0
        while True:
            material = b"managedcoin-key:%d:%d" % (seed, counter)
            k = int.from_bytes(hashlib.sha256(material).digest(), "big")
            if 0 < k < self.order:
                return k.to_bytes(32, "big")
            counter += 1

    def random_private(self) -> bytes:
        return (secrets.randbelow(self.order - 1) + 1).to_bytes(32, "big")

    def public_key(self, private: bytes) -> bytes:
        return _secret(private).public_key.format(compressed=True)

    def sign(self, private: bytes, digest: bytes) -> bytes:
        return _secret(private).sign(digest, hasher=None)

    def verify(self, public: bytes, digest: bytes, signature: bytes) -> bool:
        try:
            return coincurve.verify_signature(signature, digest, public, hasher=None)
        except (ValueError, TypeError):
            return False


SCHEMES = {Secp256k1.scheme_id: Secp256k1()}


def get_scheme(scheme_id: str):
    try:
        return SCHEMES[scheme_id]
    except KeyError:
        raise ValueError(f"unknown signature scheme {scheme_id!r}") from None


@lru_cache(maxsize=1 << 16)
def verify(scheme_id: str, public: bytes, digest: bytes, signature: bytes) -> bool:
    """Cached signature check; validation of the same block by many nodes hits the cache."""
    return get_scheme(scheme_id).verify(public, digest, signature)


@dataclass(frozen=True)
class KeyPair:
    private: bytes
    public: bytes
    scheme: str = DEFAULT_SCHEME

    @classmethod
    def from_seed(cls, seed: int, scheme: str = DEFAULT_SCHEME) -> KeyPair:
        s = get_scheme(scheme)
        priv = s.private_from_seed(seed)
        return cls(priv, s.public_key(priv), scheme)

    @classmethod
    def generate(cls, scheme: str = DEFAULT_SCHEME) -> KeyPair:
        s = get_scheme(scheme)
        priv = s.random_private()
        return cls(priv, s.public_key(priv), scheme)

    @classmethod
    def from_private(cls, private: bytes, scheme: str = DEFAULT_SCHEME) -> KeyPair:
        return cls(private, get_scheme(scheme).public_key(private), scheme)

    def sign(self, digest: bytes) -> bytes:
        return get_scheme(self.scheme).sign(self.private, digest)

    def __repr__(self) -> str:
        return f"KeyPair(public={self.public.hex()}, scheme={self.scheme!r})"
