"""Meetup validation and reward issuance.

Per meetup, ``compute_sets`` finds the attested set (every member holds at
least one attestation from another member of the set) as the greatest such
set, by iterative pruning; the reputable attested set is the same fixed point
over reputable participants only. The head-count vote of the reputable set
must have a strict majority, otherwise the meetup issues nothing.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Iterable, Mapping

from .errors import InvariantViolation, MalformedInput
from .ledger import Ledger, to_units
from .meetup import AttestationBundle, ClaimOfAttendance

UNATTESTED = "unattested"
NO_MAJORITY = "no-majority"
RULE7 = "Rule 7"
RULE8 = "Rule 8"
RULE9 = "Rule 9"


# -- reputation tokens ------------------------------------------------------


@dataclass(frozen=True)
class ReputationProof:
    """Evidence of validated attendance at meetup ``meetup`` of ceremony ``ceremony``."""

    ceremony: int
    meetup: int
    token: bytes

    def to_dict(self) -> dict:
        return {"ceremony": self.ceremony, "meetup": self.meetup, "token": self.token.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "ReputationProof":
        return cls(int(d["ceremony"]), int(d["meetup"]), bytes.fromhex(d["token"]))


class ReputationStore:
    """Single-use reputation tokens of one currency."""

    def __init__(self) -> None:
        self._tokens: dict[bytes, tuple[int, int]] = {}

    def issue(self, ceremony: int, meetup: int, rng: random.Random) -> ReputationProof:
        token = rng.randbytes(32)
        while token in self._tokens:
            token = rng.randbytes(32)
        self._tokens[token] = (ceremony, meetup)
        return ReputationProof(ceremony, meetup, token)

    def is_valid(self, proof: ReputationProof) -> bool:
        return self._tokens.get(proof.token) == (proof.ceremony, proof.meetup)

    def redeem(self, proof: ReputationProof) -> bool:
        """Consume the token; False if unknown, mismatched or already used."""
        if not self.is_valid(proof):
            return False
        del self._tokens[proof.token]
        return True

    def expire(self, before: int) -> int:
        """Forget unredeemed tokens of ceremonies before ``before``; returns how many."""
        stale = [t for t, (c, _) in self._tokens.items() if c < before]
        for t in stale:
            del self._tokens[t]
        return len(stale)

    def __len__(self) -> int:
        return len(self._tokens)


# -- witnessing intake ------------------------------------------------------


def filter_bundle(
    bundle: AttestationBundle,
    *,
    submitter: bytes,
    ceremony: int,
    meetup: int,
    members: frozenset[bytes] | set[bytes],
    verify_signatures: bool = True,
) -> tuple[ClaimOfAttendance | None, frozenset[bytes]]:
    """Keep only attestations by *other* members of the same meetup and ceremony,
    over the submitter's own claim. Returns the accepted claim (or None) and
    the set of distinct attesters."""
    claim = bundle.claim
    if claim.key != submitter or claim.ceremony != ceremony or claim.meetup != meetup:
        return None, frozenset()
    attesters = set()
    for att in bundle.attestations:
        if (att.claim is not claim and att.claim != claim) or att.attester == submitter or att.attester not in members:
            continue
        if verify_signatures and not att.verify():
            continue
        attesters.add(att.attester)
    return claim, frozenset(attesters)


@dataclass
class MeetupRegistry:
    """Witnessed data of one meetup after intake filtering."""

    ceremony: int
    meetup: int
    members: tuple[bytes, ...]
    reputable: frozenset[bytes]
    votes: dict[bytes, int] = field(default_factory=dict)
    attesters: dict[bytes, frozenset[bytes]] = field(default_factory=dict)

    def received(self, key: bytes) -> int:
        return len(self.attesters.get(key, ()))

    def attested_counts(self) -> Counter:
        """N_n: for each participant, how many others it attested."""
        counts: Counter = Counter()
        for attesters in self.attesters.values():
            counts.update(attesters)
        return counts

    def attestation_count(self) -> int:
        return sum(len(a) for a in self.attesters.values())


def _supported_core(candidates: Iterable[bytes], attesters: Mapping[bytes, frozenset[bytes]]) -> frozenset[bytes]:
    core = {n for n in candidates if attesters.get(n)}
    changed = True
    while changed:
        changed = False
        for n in list(core):
            if not any(a in core and a != n for a in attesters[n]):
                core.discard(n)
                changed = True
    return frozenset(core)


def compute_sets(reg: MeetupRegistry) -> tuple[frozenset[bytes], frozenset[bytes]]:
    """(attested set, reputable attested set) as greatest fixed points."""
    m_bar = _supported_core(reg.members, reg.attesters)
    m_hat = _supported_core((k for k in reg.members if k in reg.reputable), reg.attesters)
    return m_bar, m_hat


def majority_vote(votes: Iterable[int]) -> int | None:
    """The value held by a strict majority, or None (empty input or no majority)."""
    tally = Counter(votes)
    total = sum(tally.values())
    if not total:
        return None
    value, count = tally.most_common(1)[0]
    return value if 2 * count > total else None


@dataclass(frozen=True)
class ParticipantVerdict:
    key: bytes
    meetup: int
    reputable: bool
    in_m_bar: bool
    in_m_hat: bool
    vote: int | None
    received: int
    attested: int
    valid: bool
    reasons: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "key": self.key.hex(),
            "meetup": self.meetup,
            "reputable": self.reputable,
            "in_m_bar": self.in_m_bar,
            "in_m_hat": self.in_m_hat,
            "vote": self.vote,
            "received": self.received,
            "attested": self.attested,
            "valid": self.valid,
            "reasons": list(self.reasons),
        }


@dataclass(frozen=True)
class MeetupValidation:
    meetup: int
    m_bar: frozenset[bytes]
    m_hat: frozenset[bytes]
    nu_hat: int | None
    valid: frozenset[bytes]
    verdicts: dict[bytes, ParticipantVerdict]


def validate_meetup(
    reg: MeetupRegistry, m_bar: frozenset[bytes], m_hat: frozenset[bytes], nu_hat: int | None
) -> MeetupValidation:
    floor = len(m_hat) - 2
    attested = reg.attested_counts()
    verdicts = {}
    valid = set()
    for key in reg.members:
        vote = reg.votes.get(key)
        received = reg.received(key)
        n_n = attested.get(key, 0)
        reasons = []
        if key not in m_bar:
            reasons.append(UNATTESTED)
        if nu_hat is None:
            reasons.append(NO_MAJORITY)
        else:
            if vote != nu_hat:
                reasons.append(RULE7)
            if received < floor:
                reasons.append(RULE8)
            if not floor <= n_n <= nu_hat:
                reasons.append(RULE9)
        ok = not reasons
        if ok:
            valid.add(key)
        verdicts[key] = ParticipantVerdict(
            key, reg.meetup, key in reg.reputable, key in m_bar, key in m_hat, vote, received, n_n, ok, tuple(reasons)
        )
    return MeetupValidation(reg.meetup, m_bar, m_hat, nu_hat, frozenset(valid), verdicts)


def evaluate_meetup(reg: MeetupRegistry) -> MeetupValidation:
    m_bar, m_hat = compute_sets(reg)
    nu_hat = majority_vote(reg.votes[k] for k in m_hat)
    result = validate_meetup(reg, m_bar, m_hat, nu_hat)
    n = len(reg.members)
    if not result.valid <= m_bar or not m_hat <= m_bar:
        raise InvariantViolation(f"meetup {reg.meetup}: valid/reputable sets escape the attested set")
    if reg.attestation_count() > n * (n - 1):
        raise InvariantViolation(f"meetup {reg.meetup}: more attestations than ordered member pairs")
    return result


@dataclass
class ValidationResult:
    ceremony: int
    meetups: dict[int, MeetupValidation] = field(default_factory=dict)

    @property
    def valid(self) -> frozenset[bytes]:
        return frozenset().union(*(m.valid for m in self.meetups.values()))

    def verdicts(self) -> list[ParticipantVerdict]:
        return [v for m in sorted(self.meetups) for v in self.meetups[m].verdicts.values()]

    def to_records(self) -> list[dict]:
        return [dict(v.to_dict(), ceremony=self.ceremony) for v in self.verdicts()]


def issue(
    result: ValidationResult,
    ledger: Ledger,
    store: ReputationStore,
    mint_times: Mapping[int, datetime],
    rng: random.Random,
    *,
    reward: float | None = None,
    payout: Callable[[bytes], bytes] | None = None,
) -> dict[bytes, ReputationProof]:
    """Mint the reward to every valid participant and hand out one reputation
    token each. ``payout`` maps a one-time key to the ledger account credited."""
    proofs = {}
    units = ledger.reward_units if reward is None else to_units(reward)
    for m in sorted(result.meetups):
        for key in sorted(result.meetups[m].valid):
            account = payout(key) if payout else key
            ledger.mint_units(account, mint_times[m], units, ceremony=result.ceremony)
            proofs[key] = store.issue(result.ceremony, m, rng)
    return proofs


# -- offline transcripts ----------------------------------------------------


@dataclass(frozen=True)
class Transcript:
    """Everything needed to re-run validation of one meetup offline."""

    ceremony: int
    meetup: int
    members: tuple[bytes, ...]
    reputable: frozenset[bytes]
    submissions: tuple[tuple[bytes, AttestationBundle], ...]

    def to_dict(self) -> dict:
        return {
            "ceremony": self.ceremony,
            "meetup": self.meetup,
            "members": [{"key": k.hex(), "reputable": k in self.reputable} for k in self.members],
            "submissions": [{"participant": p.hex(), "bundle": b.to_dict()} for p, b in self.submissions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        try:
            members = tuple(bytes.fromhex(m["key"]) for m in d["members"])
            reputable = frozenset(bytes.fromhex(m["key"]) for m in d["members"] if m["reputable"])
            subs = tuple(
                (bytes.fromhex(s["participant"]), AttestationBundle.from_dict(s["bundle"])) for s in d["submissions"]
            )
            return cls(int(d["ceremony"]), int(d["meetup"]), members, reputable, subs)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise MalformedInput(f"bad transcript: {exc}") from exc


def registry_from_transcript(
    t: Transcript, verify_signatures: bool = True
) -> tuple[MeetupRegistry, list[bytes]]:
    """Apply intake filtering to a transcript's submissions; returns the
    registry and the submitters that are not members of the meetup."""
    members = frozenset(t.members)
    reg = MeetupRegistry(t.ceremony, t.meetup, t.members, t.reputable)
    strangers = []
    for participant, bundle in t.submissions:
        if participant not in members:
            strangers.append(participant)
            continue
        claim, attesters = filter_bundle(
            bundle,
            submitter=participant,
            ceremony=t.ceremony,
            meetup=t.meetup,
            members=members,
            verify_signatures=verify_signatures,
        )
        if claim is None:
            reg.votes.pop(participant, None)
            reg.attesters.pop(participant, None)
        else:
            reg.votes[participant] = claim.vote
            reg.attesters[participant] = attesters
    return reg, strangers
