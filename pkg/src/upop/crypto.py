"""Signing primitives. Ed25519 via ``cryptography``; currency ids are SHA-256.

Protocol code only sees raw bytes: 32-byte public keys, 64-byte signatures.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .errors import BadBootstrapSize

PUBLIC_KEY_LEN = 32
SIGNATURE_LEN = 64
MIN_FOUNDERS = 3
MAX_FOUNDERS = 12

_RAW = serialization.Encoding.Raw


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes

    def __repr__(self) -> str:
        return f"KeyPair(public={self.public.hex()[:16]}...)"


def generate_keypair(seed: bytes) -> KeyPair:
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pub = sk.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)
    return KeyPair(pub, seed)


# loading a key costs about as much as a signature; meetups reuse keys a lot
@lru_cache(maxsize=8192)
def _private(raw: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(raw)


@lru_cache(maxsize=8192)
def _public(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


def sign(message: bytes, key: KeyPair) -> bytes:
    return _private(key.private).sign(message)


def verify(sig: bytes, message: bytes, pub: bytes) -> bool:
    # malformed keys or signatures are a plain "no"
    try:
        _public(bytes(pub)).verify(bytes(sig), bytes(message))
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def group_id(pubs: Iterable[bytes]) -> bytes:
    """Currency id: SHA-256 over the founders' keys, sorted bytewise."""
    keys = sorted(bytes(p) for p in pubs)
    if not MIN_FOUNDERS <= len(keys) <= MAX_FOUNDERS:
        raise BadBootstrapSize(f"trusted setup needs {MIN_FOUNDERS}-{MAX_FOUNDERS} founders, got {len(keys)}")
    return hashlib.sha256(b"".join(keys)).digest()


def derive_seed(*parts: object) -> bytes:
    """Deterministic 32-byte seed from arbitrary labels (simulation keys)."""
    h = hashlib.blake2b(digest_size=32, person=b"upop-seed")
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return h.digest()
