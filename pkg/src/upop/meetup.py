"""Physical meetup simulation: claims of attendance and pairwise attestations.

A claim is the tuple (one-time key, ceremony index, meetup index, head-count
vote) plus the instant it was broadcast. Attesters sign the claim's canonical
bytes. Honest attendees attest every in-window claim presented to them at the
meetup; claims broadcast after ``T + window`` get no honest attestations.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Hashable, NamedTuple, Sequence

from . import crypto
from .crypto import KeyPair
from .errors import MalformedInput

_CLAIM = struct.Struct(">32sIIIq")
_SIGN_DOMAIN = b"upop/claim/v1"
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _to_us(t: datetime) -> int:
    return (t - _EPOCH) // timedelta(microseconds=1)


@dataclass(frozen=True)
class ClaimOfAttendance:
    key: bytes
    ceremony: int
    meetup: int
    vote: int
    broadcast_at: datetime

    def __post_init__(self) -> None:
        if len(self.key) != crypto.PUBLIC_KEY_LEN:
            raise ValueError("claim key must be 32 bytes")
        if self.vote < 1:
            raise ValueError("vote must be at least 1")
        if self.ceremony < 0 or self.meetup < 0:
            raise ValueError("ceremony and meetup indices are non-negative")

    def encode(self) -> bytes:
        return _CLAIM.pack(self.key, self.ceremony, self.meetup, self.vote, _to_us(self.broadcast_at))

    @classmethod
    def decode(cls, data: bytes) -> "ClaimOfAttendance":
        if len(data) != _CLAIM.size:
            raise MalformedInput("claim encoding has wrong length")
        key, i, m, vote, us = _CLAIM.unpack(data)
        return cls(key, i, m, vote, _EPOCH + timedelta(microseconds=us))

    def signing_bytes(self) -> bytes:
        return _SIGN_DOMAIN + self.encode()

    def to_dict(self) -> dict:
        return {
            "key": self.key.hex(),
            "ceremony": self.ceremony,
            "meetup": self.meetup,
            "vote": self.vote,
            "broadcast_at": self.broadcast_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClaimOfAttendance":
        try:
            return cls(
                bytes.fromhex(d["key"]),
                int(d["ceremony"]),
                int(d["meetup"]),
                int(d["vote"]),
                datetime.fromisoformat(d["broadcast_at"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInput(f"bad claim record: {exc}") from exc


class Attestation(NamedTuple):
    # a tuple rather than a frozen dataclass: simulations build millions
    claim: ClaimOfAttendance
    attester: bytes
    sig: bytes

    def verify(self) -> bool:
        if self.attester == self.claim.key:
            return False
        return crypto.verify(self.sig, self.claim.signing_bytes(), self.attester)

    def to_dict(self) -> dict:
        return {"claim": self.claim.to_dict(), "attester": self.attester.hex(), "sig": self.sig.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "Attestation":
        try:
            return cls(ClaimOfAttendance.from_dict(d["claim"]), bytes.fromhex(d["attester"]), bytes.fromhex(d["sig"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInput(f"bad attestation record: {exc}") from exc


def attest(claim: ClaimOfAttendance, attester: KeyPair, sign: bool = True) -> Attestation:
    if not sign:
        return Attestation(claim, attester.public, b"")
    return Attestation(claim, attester.public, crypto.sign(claim.signing_bytes(), attester))


@dataclass(frozen=True)
class AttestationBundle:
    """What one participant submits for witnessing: its own claim and the
    attestations it collected for it."""

    claim: ClaimOfAttendance
    attestations: tuple[Attestation, ...] = ()

    def to_dict(self) -> dict:
        return {"claim": self.claim.to_dict(), "attestations": [a.to_dict() for a in self.attestations]}

    @classmethod
    def from_dict(cls, d: dict) -> "AttestationBundle":
        try:
            return cls(
                ClaimOfAttendance.from_dict(d["claim"]),
                tuple(Attestation.from_dict(a) for a in d["attestations"]),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedInput(f"bad bundle record: {exc}") from exc


def honest_vote(present_count: int) -> int:
    return present_count


def oversigner_vote(present_count: int, extra: int) -> int:
    if extra < 1:
        raise ValueError("an oversigner claims at least one extra attendee")
    return present_count + extra


@dataclass
class MeetupMember:
    """One assigned identity and how it behaves at the meetup.

    ``vote=None`` means the honest head count. ``ghosts`` are extra keys an
    oversigner presents on its own devices. Identities sharing a
    ``colluder_group`` exchange claims and attestations remotely, whether or
    not they are physically present.
    """

    keypair: KeyPair
    present: bool = True
    arrival_s: float | None = None
    vote: int | None = None
    ghosts: tuple[KeyPair, ...] = ()
    colluder_group: Hashable | None = None

    @property
    def key(self) -> bytes:
        return self.keypair.public


@dataclass
class MeetupOutcome:
    claims: dict[bytes, ClaimOfAttendance] = field(default_factory=dict)
    bundles: dict[bytes, AttestationBundle] = field(default_factory=dict)


@dataclass
class _Broadcast:
    claim: ClaimOfAttendance
    signer: KeyPair
    physical: bool
    group: Hashable | None


def run_meetup(
    members: Sequence[MeetupMember],
    T: datetime,
    window_s: float,
    *,
    ceremony: int,
    meetup: int,
    seed: int | str = 0,
    sign: bool = True,
) -> MeetupOutcome:
    rng = random.Random(f"meetup:{seed}:{ceremony}:{meetup}")
    head_count = sum(1 for m in members if m.present)
    deadline = T + timedelta(seconds=window_s)

    sent: list[_Broadcast] = []
    for m in members:
        if not (m.present or m.colluder_group is not None):
            continue
        offset = m.arrival_s if m.arrival_s is not None else rng.uniform(0.0, window_s / 2)
        at = T + timedelta(seconds=offset)
        vote = m.vote if m.vote is not None else honest_vote(head_count)
        sent.append(_Broadcast(ClaimOfAttendance(m.key, ceremony, meetup, vote, at), m.keypair, m.present, m.colluder_group))
        if m.present:
            for g in m.ghosts:
                sent.append(_Broadcast(ClaimOfAttendance(g.public, ceremony, meetup, vote, at), g, True, None))

    # physically present people attest every on-time claim they witness;
    # colluders attest each other remotely
    in_room = [b for b in sent if b.physical]
    groups: dict[Hashable, list[_Broadcast]] = {}
    for b in sent:
        if b.group is not None:
            groups.setdefault(b.group, []).append(b)
    received: dict[bytes, list[Attestation]] = {}
    for b in sent:
        seen = b.physical and b.claim.broadcast_at <= deadline
        signers = [r for r in in_room if r is not b] if seen else []
        if b.group is not None:
            signers += [r for r in groups[b.group] if r is not b and not (seen and r.physical)]
        if sign:
            received[b.claim.key] = [attest(b.claim, r.signer) for r in signers]
        else:
            received[b.claim.key] = [Attestation(b.claim, r.signer.public, b"") for r in signers]

    out = MeetupOutcome()
    for b in sent:
        out.claims[b.claim.key] = b.claim
        out.bundles[b.claim.key] = AttestationBundle(b.claim, tuple(received[b.claim.key]))
    return out
