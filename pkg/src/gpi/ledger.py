"""Append-only, signature-verified, totally-ordered event log.

The ledger is the single shared record every other module derives state
from: identifier declarations, updates, resets, surety pledges, reset
endorsements, and community add/remove events.  Events are signed over a
canonical binary encoding of their body and verified before they are
accepted; once appended they are immutable.

Signer rules
------------
Each body type fixes who must sign it:

* ``Declare``          -> the declared identifier
* ``Update``           -> the new identifier
* ``Reset``            -> the identifier being nullified
* ``Pledge``           -> the pledging identifier
* ``ResetEndorsement`` -> the endorsing identifier
* ``CommunityAdd`` / ``CommunityRemove`` -> any registered community-admin
  key.  Community governance is out of scope, so who gets to sign these is
  a configuration choice (``Ledger.admins``), not a protocol rule.

Concurrency: ledger values are immutable once constructed and safe to
share across threads.  ``append_event`` returns a new value; a single
writer per ledger instance is the contract (the backing store is shared
structurally between a ledger and the values appended from it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

from .keys import KeyPair, PublicIdentifier, Signature, get_scheme


class LedgerError(Exception):
    """Base class for ledger failures."""


class SignerMismatch(LedgerError):
    """The signing key does not match the identifier the body speaks for."""


class EncodingError(LedgerError):
    """The event body violates a structural invariant or cannot be encoded."""


class ParseError(LedgerError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class VerifyError(LedgerError):
    def __init__(self, seq: int, reason: str = "signature does not verify"):
        super().__init__(f"event {seq}: {reason}")
        self.seq = seq
        self.reason = reason


# ---------------------------------------------------------------------------
# Event bodies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Declare:
    v: PublicIdentifier


@dataclass(frozen=True)
class Update:
    new_v: PublicIdentifier
    old_v: PublicIdentifier

    def __post_init__(self) -> None:
        if self.new_v == self.old_v:
            raise EncodingError("update must introduce a distinct identifier")


@dataclass(frozen=True)
class Reset:
    old_v: PublicIdentifier


@dataclass(frozen=True)
class Pledge:
    surety_type: int
    from_v: PublicIdentifier
    to_v: PublicIdentifier

    def __post_init__(self) -> None:
        if self.surety_type not in (1, 2, 3, 4):
            raise EncodingError(f"surety type must be 1..4, got {self.surety_type}")
        if self.from_v == self.to_v:
            raise EncodingError("a pledge to oneself is not allowed")


@dataclass(frozen=True)
class ResetEndorsement:
    target_v: PublicIdentifier
    endorser_v: PublicIdentifier


@dataclass(frozen=True)
class CommunityAdd:
    v: PublicIdentifier


@dataclass(frozen=True)
class CommunityRemove:
    v: PublicIdentifier


EventBody = Union[
    Declare, Update, Reset, Pledge, ResetEndorsement, CommunityAdd, CommunityRemove
]

_TYPE_NAMES: dict[type, str] = {
    Declare: "declare",
    Update: "update",
    Reset: "reset",
    Pledge: "pledge",
    ResetEndorsement: "reset_endorsement",
    CommunityAdd: "community_add",
    CommunityRemove: "community_remove",
}
_TYPE_TAGS: dict[type, int] = {cls: i + 1 for i, cls in enumerate(_TYPE_NAMES)}


def required_signer(body: EventBody) -> PublicIdentifier | None:
    """The identifier that must sign ``body``; None for admin-signed events."""
    if isinstance(body, Declare):
        return body.v
    if isinstance(body, Update):
        return body.new_v
    if isinstance(body, Reset):
        return body.old_v
    if isinstance(body, Pledge):
        return body.from_v
    if isinstance(body, ResetEndorsement):
        return body.endorser_v
    if isinstance(body, (CommunityAdd, CommunityRemove)):
        return None
    raise EncodingError(f"unknown body type {type(body).__name__}")


# ---------------------------------------------------------------------------
# Canonical encoding
# ---------------------------------------------------------------------------
# Signatures need one bit-exact serialization: a single type tag byte
# followed by the body fields in declaration order, every byte string
# length-prefixed (u16 big-endian).

def _enc_bytes(b: bytes) -> bytes:
    if len(b) > 0xFFFF:
        raise EncodingError("field too long for canonical encoding")
    return len(b).to_bytes(2, "big") + b


def _enc_ident(v: PublicIdentifier) -> bytes:
    return _enc_bytes(v.scheme_id.encode("utf-8")) + _enc_bytes(v.key_bytes)


def encode_body(body: EventBody) -> bytes:
    tag = _TYPE_TAGS.get(type(body))
    if tag is None:
        raise EncodingError(f"unknown body type {type(body).__name__}")
    out = bytes([tag])
    if isinstance(body, Declare):
        return out + _enc_ident(body.v)
    if isinstance(body, Update):
        return out + _enc_ident(body.new_v) + _enc_ident(body.old_v)
    if isinstance(body, Reset):
        return out + _enc_ident(body.old_v)
    if isinstance(body, Pledge):
        return out + bytes([body.surety_type]) + _enc_ident(body.from_v) + _enc_ident(body.to_v)
    if isinstance(body, ResetEndorsement):
        return out + _enc_ident(body.target_v) + _enc_ident(body.endorser_v)
    return out + _enc_ident(body.v)  # CommunityAdd / CommunityRemove


# ---------------------------------------------------------------------------
# Signed events and the ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignedEvent:
    seq: int
    body: EventBody
    signer: PublicIdentifier
    signature: Signature


def verify_event(event: SignedEvent) -> bool:
    """True iff the signature verifies under the signer for the canonical body.

    Raises UnknownScheme if the signer's scheme is not registered.
    """
    scheme = get_scheme(event.signer.scheme_id)
    return scheme.verify(
        event.signer.key_bytes, encode_body(event.body), event.signature.sig_bytes
    )


def _mentioned_identifiers(body: EventBody) -> tuple[PublicIdentifier, ...]:
    if isinstance(body, Declare):
        return (body.v,)
    if isinstance(body, Update):
        return (body.new_v, body.old_v)
    if isinstance(body, Reset):
        return (body.old_v,)
    if isinstance(body, Pledge):
        return (body.from_v, body.to_v)
    if isinstance(body, ResetEndorsement):
        return (body.target_v, body.endorser_v)
    return (body.v,)  # CommunityAdd / CommunityRemove


class Ledger:
    """Immutable totally-ordered sequence of verified signed events.

    ``append_event`` returns a new ledger value; the original is unchanged.
    Appends at the tip share the backing list structurally, so building a
    long log by repeated appends stays O(1) amortized while every
    previously obtained ledger value keeps observing exactly its prefix.
    """

    __slots__ = ("_backing", "_length", "admins", "_mention_index")

    def __init__(
        self,
        events: Iterable[SignedEvent] = (),
        admins: Iterable[PublicIdentifier] = (),
    ):
        backing = list(events)
        for i, ev in enumerate(backing):
            if ev.seq != i:
                raise ValueError(f"event at position {i} carries seq {ev.seq}")
        self._backing: list[SignedEvent] = backing
        self._length: int = len(backing)
        self.admins: frozenset[PublicIdentifier] = frozenset(admins)
        self._mention_index: dict[PublicIdentifier, tuple[int, ...]] | None = None

    def __len__(self) -> int:
        return self._length

    def __iter__(self) -> Iterator[SignedEvent]:
        for i in range(self._length):
            yield self._backing[i]

    def __getitem__(self, seq: int) -> SignedEvent:
        if not 0 <= seq < self._length:
            raise IndexError(seq)
        return self._backing[seq]

    def __eq__(self, other: object) -> bool:
        # Value identity is the event sequence; the admin set is append-time
        # policy configuration and not part of the recorded log.
        if not isinstance(other, Ledger):
            return NotImplemented
        return self.events == other.events

    def __hash__(self) -> int:
        return hash(self.events)

    def __repr__(self) -> str:
        return f"Ledger({self._length} events)"

    @property
    def events(self) -> tuple[SignedEvent, ...]:
        return tuple(self._backing[: self._length])

    def events_for(self, v: PublicIdentifier) -> tuple[int, ...]:
        """Seqs of events mentioning ``v``, built lazily per ledger value."""
        if self._mention_index is None:
            index: dict[PublicIdentifier, list[int]] = {}
            for ev in self:
                for ident in _mentioned_identifiers(ev.body):
                    index.setdefault(ident, []).append(ev.seq)
            self._mention_index = {k: tuple(seqs) for k, seqs in index.items()}
        return self._mention_index.get(v, ())

    def prefix(self, k: int) -> Ledger:
        """The ledger value containing exactly the events with seq < k."""
        if not 0 <= k <= self._length:
            raise ValueError(f"prefix length {k} out of range 0..{self._length}")
        out = Ledger.__new__(Ledger)
        out._backing = self._backing
        out._length = k
        out.admins = self.admins
        out._mention_index = None
        return out

    def with_admins(self, admins: Iterable[PublicIdentifier]) -> Ledger:
        out = Ledger.__new__(Ledger)
        out._backing = self._backing
        out._length = self._length
        out.admins = frozenset(admins)
        out._mention_index = None
        return out

    def _appended(self, event: SignedEvent) -> Ledger:
        if self._length == len(self._backing):
            self._backing.append(event)
            backing = self._backing
        else:  # appending from a non-tip value: copy the prefix
            backing = self._backing[: self._length] + [event]
        out = Ledger.__new__(Ledger)
        out._backing = backing
        out._length = self._length + 1
        out.admins = self.admins
        out._mention_index = None
        return out


def append_event(ledger: Ledger, body: EventBody, signer_key_pair: KeyPair) -> Ledger:
    """Sign ``body`` with the key pair and append it at the next seq.

    Raises SignerMismatch if the key pair's public half is not the signer
    the body requires (or, for community events, not a registered admin).
    """
    required = required_signer(body)
    public = signer_key_pair.public
    if required is None:
        if public not in ledger.admins:
            raise SignerMismatch(
                "community add/remove must be signed by a registered admin key"
            )
    elif public != required:
        raise SignerMismatch(
            f"body requires signer {required.label}, got {public.label}"
        )
    message = encode_body(body)
    scheme = get_scheme(public.scheme_id)
    sig = Signature(scheme.sign(signer_key_pair.secret, message))
    event = SignedEvent(len(ledger), body, public, sig)
    if not verify_event(event):  # never store anything that does not verify
        raise SignerMismatch("produced signature failed verification")
    return ledger._appended(event)


# ---------------------------------------------------------------------------
# Text serialization (one JSON object per line)
# ---------------------------------------------------------------------------

def _ident_obj(v: PublicIdentifier) -> dict:
    return {"scheme": v.scheme_id, "key": v.key_bytes.hex()}


def _payload(body: EventBody) -> dict:
    if isinstance(body, Declare):
        return {"v": _ident_obj(body.v)}
    if isinstance(body, Update):
        return {"new": _ident_obj(body.new_v), "old": _ident_obj(body.old_v)}
    if isinstance(body, Reset):
        return {"old": _ident_obj(body.old_v)}
    if isinstance(body, Pledge):
        return {
            "surety_type": body.surety_type,
            "from": _ident_obj(body.from_v),
            "to": _ident_obj(body.to_v),
        }
    if isinstance(body, ResetEndorsement):
        return {"target": _ident_obj(body.target_v), "endorser": _ident_obj(body.endorser_v)}
    return {"v": _ident_obj(body.v)}


def serialize_log(ledger: Ledger) -> bytes:
    """Serialize to UTF-8 text, one compact JSON object per line."""
    lines = []
    for ev in ledger:
        record = {
            "seq": ev.seq,
            "type": _TYPE_NAMES[type(ev.body)],
            "payload": _payload(ev.body),
            "signer": ev.signer.key_bytes.hex(),
            "sig": ev.signature.sig_bytes.hex(),
            "scheme": ev.signer.scheme_id,
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def _parse_ident(obj: object, line: int, field: str) -> PublicIdentifier:
    if not isinstance(obj, dict) or "scheme" not in obj or "key" not in obj:
        raise ParseError(line, f"payload field {field!r} is not an identifier object")
    try:
        return PublicIdentifier(str(obj["scheme"]), bytes.fromhex(str(obj["key"])))
    except ValueError as exc:
        raise ParseError(line, f"bad identifier in field {field!r}: {exc}") from None


def _parse_body(rec: dict, line: int) -> EventBody:
    kind = rec.get("type")
    payload = rec.get("payload")
    if not isinstance(payload, dict):
        raise ParseError(line, "missing payload object")
    try:
        if kind == "declare":
            return Declare(_parse_ident(payload.get("v"), line, "v"))
        if kind == "update":
            new_v = _parse_ident(payload.get("new"), line, "new")
            # Initial declarations may be written as an update from null;
            # normalize that form to a plain declaration.
            if payload.get("old") is None:
                return Declare(new_v)
            return Update(new_v, _parse_ident(payload.get("old"), line, "old"))
        if kind == "reset":
            return Reset(_parse_ident(payload.get("old"), line, "old"))
        if kind == "pledge":
            st = payload.get("surety_type")
            if not isinstance(st, int):
                raise ParseError(line, "pledge payload missing integer surety_type")
            return Pledge(
                st,
                _parse_ident(payload.get("from"), line, "from"),
                _parse_ident(payload.get("to"), line, "to"),
            )
        if kind == "reset_endorsement":
            return ResetEndorsement(
                _parse_ident(payload.get("target"), line, "target"),
                _parse_ident(payload.get("endorser"), line, "endorser"),
            )
        if kind == "community_add":
            return CommunityAdd(_parse_ident(payload.get("v"), line, "v"))
        if kind == "community_remove":
            return CommunityRemove(_parse_ident(payload.get("v"), line, "v"))
    except EncodingError as exc:
        raise ParseError(line, str(exc)) from None
    raise ParseError(line, f"unknown event type {kind!r}")


def parse_log(data: bytes, admins: Iterable[PublicIdentifier] = ()) -> Ledger:
    """Parse and re-verify a serialized log.

    Every event's signature is re-verified (VerifyError names the failing
    seq) and the signer rule is re-checked for every body that names its
    signer.  Community add/remove events are checked cryptographically
    only: admin membership is append-time policy and is not recorded in
    the file.  Seq values must be dense from 0; gaps are rejected.
    """
    events: list[SignedEvent] = []
    for i, raw in enumerate(data.decode("utf-8").splitlines()):
        line = i + 1
        if not raw.strip():
            raise ParseError(line, "blank line")
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(line, f"bad JSON: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise ParseError(line, "record is not an object")
        for field in ("seq", "type", "payload", "signer", "sig", "scheme"):
            if field not in rec:
                raise ParseError(line, f"missing field {field!r}")
        if rec["seq"] != i:
            raise ParseError(line, f"expected seq {i}, got {rec['seq']!r}")
        body = _parse_body(rec, line)
        try:
            signer = PublicIdentifier(str(rec["scheme"]), bytes.fromhex(str(rec["signer"])))
            sig = Signature(bytes.fromhex(str(rec["sig"])))
        except ValueError as exc:
            raise ParseError(line, f"bad signer or signature hex: {exc}") from None
        event = SignedEvent(i, body, signer, sig)
        if not verify_event(event):
            raise VerifyError(i)
        required = required_signer(body)
        if required is not None and signer != required:
            raise VerifyError(i, "signer does not match the identifier the body speaks for")
        events.append(event)
    return Ledger(events, admins)


def write_log(path, ledger: Ledger) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_log(ledger))


def read_log(path, admins: Iterable[PublicIdentifier] = ()) -> Ledger:
    with open(path, "rb") as fh:
        return parse_log(fh.read(), admins)
