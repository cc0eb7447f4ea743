"""Peer identities: Ed25519 key pairs addressed by public-key fingerprint."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_LEN = 32

# Reserved fingerprints; no real public key hashes to these in practice.
NOBODY = b"\x00" * DIGEST_LEN
EVERYBODY = b"\xff" * DIGEST_LEN


def digest(data: bytes) -> bytes:
    """The one hash primitive used for fingerprints, checksums and chaining."""
    return hashlib.sha256(data).digest()


def fingerprint_of(public_key: bytes) -> bytes:
    return digest(public_key)


@dataclass(frozen=True)
class Identity:
    """A peer identity. Holds a private key handle only if it can sign."""

    public_key: bytes
    fingerprint: bytes
    _private: Ed25519PrivateKey | None = field(default=None, repr=False, compare=False)

    @classmethod
    def generate(cls) -> "Identity":
        priv = Ed25519PrivateKey.generate()
        return cls._from_private(priv)

    @classmethod
    def from_seed(cls, seed: bytes) -> "Identity":
        """Deterministic identity from a 32-byte seed (fixtures, scenarios)."""
        priv = Ed25519PrivateKey.from_private_bytes(digest(seed))
        return cls._from_private(priv)

    @classmethod
    def _from_private(cls, priv: Ed25519PrivateKey) -> "Identity":
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            PublicFormat,
        )

        pub = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return cls(public_key=pub, fingerprint=fingerprint_of(pub), _private=priv)

    @classmethod
    def public_only(cls, public_key: bytes) -> "Identity":
        return cls(public_key=public_key, fingerprint=fingerprint_of(public_key))

    @property
    def can_sign(self) -> bool:
        return self._private is not None

    def sign(self, message: bytes) -> bytes:
        if self._private is None:
            from .errors import SigningCapabilityError

            raise SigningCapabilityError("identity has no private key")
        return self._private.sign(message)


def verify_signature(public_key: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def fp_hex(fp: bytes) -> str:
    if fp == NOBODY:
        return "nobody"
    if fp == EVERYBODY:
        return "everybody"
    return fp.hex()
