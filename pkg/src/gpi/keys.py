"""Pluggable signature schemes and key material.

Identifiers are bare public keys tagged with the scheme that verifies them.
Heterogeneous schemes are allowed as long as every scheme in use is
registered, so verification of any event is always possible.

Two schemes ship by default:

``ed25519``
    Deterministic Ed25519 signatures via the ``cryptography`` package.
    This is the scheme intended for real logs.

``mock``
    A hash-based stand-in (signature = tagged SHA-256 of secret + message,
    with the public key equal to the secret).  It offers no security and
    exists so that property tests and large simulations can mint thousands
    of key pairs cheaply while exercising the exact same code paths.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Protocol


class UnknownScheme(KeyError):
    """Raised when an event names a signature scheme that is not registered."""


@dataclass(frozen=True)
class PublicIdentifier:
    """A public key declared (or declarable) as a personal identifier.

    Equality and hashing are byte equality of ``(scheme_id, key_bytes)``.
    """

    scheme_id: str
    key_bytes: bytes

    def __post_init__(self) -> None:
        if not self.key_bytes:
            raise ValueError("identifier key bytes must be non-empty")
        if not self.scheme_id:
            raise ValueError("identifier scheme id must be non-empty")

    @property
    def hex(self) -> str:
        return self.key_bytes.hex()

    @property
    def label(self) -> str:
        """Printable ``scheme:hexkey`` form used in JSON interfaces."""
        return f"{self.scheme_id}:{self.key_bytes.hex()}"

    def __repr__(self) -> str:  # keep failure output readable
        return f"PublicIdentifier({self.scheme_id}:{self.key_bytes.hex()[:12]}…)"


@dataclass(frozen=True)
class Signature:
    sig_bytes: bytes


@dataclass(frozen=True)
class KeyPair:
    public: PublicIdentifier
    secret: bytes


class SignatureScheme(Protocol):
    name: str

    def generate(self, seed: bytes | None = None) -> KeyPair: ...

    def sign(self, secret: bytes, message: bytes) -> bytes: ...

    def verify(self, key_bytes: bytes, message: bytes, sig: bytes) -> bool: ...


class Ed25519Scheme:
    name = "ed25519"

    def generate(self, seed: bytes | None = None) -> KeyPair:
        from cryptography.hazmat.primitives.asymmetric import ed25519

        raw = hashlib.sha256(b"ed25519-seed" + seed).digest() if seed is not None else os.urandom(32)
        private = ed25519.Ed25519PrivateKey.from_private_bytes(raw)
        public_bytes = private.public_key().public_bytes_raw()
        return KeyPair(PublicIdentifier(self.name, public_bytes), raw)

    def sign(self, secret: bytes, message: bytes) -> bytes:
        from cryptography.hazmat.primitives.asymmetric import ed25519

        return ed25519.Ed25519PrivateKey.from_private_bytes(secret).sign(message)

    def verify(self, key_bytes: bytes, message: bytes, sig: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature
        from cryptography.hazmat.primitives.asymmetric import ed25519

        try:
            ed25519.Ed25519PublicKey.from_public_bytes(key_bytes).verify(sig, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class MockScheme:
    """Fast insecure scheme for tests and simulations.

    The public key *is* the secret, so anyone may forge signatures; the
    point is only that verification is deterministic and mismatched keys
    fail, which is all the ledger machinery relies on.
    """

    name = "mock"

    def generate(self, seed: bytes | None = None) -> KeyPair:
        raw = seed if seed is not None else os.urandom(16)
        secret = hashlib.sha256(b"mock-key" + raw).digest()[:16]
        return KeyPair(PublicIdentifier(self.name, secret), secret)

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return hashlib.sha256(b"mock-sig" + secret + message).digest()

    def verify(self, key_bytes: bytes, message: bytes, sig: bytes) -> bool:
        return self.sign(key_bytes, message) == sig


_SCHEMES: dict[str, SignatureScheme] = {}


def register_scheme(scheme: SignatureScheme) -> None:
    _SCHEMES[scheme.name] = scheme


def get_scheme(name: str) -> SignatureScheme:
    try:
        return _SCHEMES[name]
    except KeyError:
        raise UnknownScheme(name) from None


def registered_schemes() -> tuple[str, ...]:
    return tuple(sorted(_SCHEMES))


def generate_keypair(scheme: str = "mock", seed: bytes | None = None) -> KeyPair:
    return get_scheme(scheme).generate(seed)


register_scheme(Ed25519Scheme())
register_scheme(MockScheme())
