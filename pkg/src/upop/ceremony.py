"""Phase machine of one ceremony of one currency.

Phases advance on a simulated clock:

    RegistrationOpen --(earliest T - 24h)--> Assigned
    Assigned --(first assigned meetup's T)--> Meetup
    Meetup --(last assigned T + its latecomer window)--> Witnessing
    Witnessing --(latest T + 24h)--> Validated

Assignment runs on entering Assigned; validation and issuance on entering
Validated. ``advance_phase`` is idempotent for a given clock value.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Callable

from .assignment import TOO_FEW, MeetupAssignment, Registrant, assign
from .errors import (
    DuplicateKey,
    OutsideWitnessingWindow,
    PhaseError,
    StaleReputation,
    TooFewParticipants,
    TooLate,
    UnknownParticipant,
)
from .events import EventLog
from .geo import Location, solar_noon, time_window
from .ledger import Ledger
from .meetup import AttestationBundle, ClaimOfAttendance
from .registry import CurrencyConfig
from .validation import (
    MeetupRegistry,
    ReputationProof,
    ReputationStore,
    ValidationResult,
    evaluate_meetup,
    filter_bundle,
    issue,
)

REPUTATION_HORIZON = 2  # a proof from ceremony j is usable at i while i - j < 2


class Phase(enum.IntEnum):
    REGISTRATION_OPEN = 0
    ASSIGNED = 1
    MEETUP = 2
    WITNESSING = 3
    VALIDATED = 4


@dataclass(frozen=True)
class Schedule:
    ceremony: int
    date: date
    registration_close: datetime
    witnessing_end: datetime
    close_offset: timedelta
    witnessing_window: timedelta

    def time_at(self, loc: Location) -> datetime:
        return solar_noon(loc, self.date)


def schedule(cfg: CurrencyConfig, index: int) -> Schedule:
    day = cfg.genesis_date + timedelta(days=index * cfg.timing.meetup_interval_days)
    lons = cfg.locations.lons
    # solar noon is earliest at the easternmost location
    first = solar_noon(Location("_", 0.0, float(lons.max())), day)
    last = solar_noon(Location("_", 0.0, float(lons.min())), day)
    close = timedelta(hours=cfg.timing.registration_close_offset_h)
    window = timedelta(hours=cfg.timing.witnessing_window_h)
    return Schedule(index, day, first - close, last + window, close, window)


@dataclass(frozen=True)
class Registration:
    onetime_key: bytes
    currency: bytes
    submitted_at: datetime
    reputation: ReputationProof | None = None
    confidential: bool = True


class Ceremony:
    """State of ceremony ``index`` for one currency.

    ``payout`` maps one-time keys to the ledger accounts credited on issuance;
    by default the one-time key itself is the account.
    """

    def __init__(
        self,
        config: CurrencyConfig,
        index: int,
        *,
        reputation: ReputationStore,
        ledger: Ledger,
        log: EventLog | None = None,
        seed: int | str = 0,
        verify_signatures: bool = True,
        payout: Callable[[bytes], bytes] | None = None,
    ):
        self.config = config
        self.index = index
        self.store = reputation
        self.ledger = ledger
        self.log = log
        self.seed = seed
        self.verify_signatures = verify_signatures
        self.payout = payout
        self.schedule = schedule(config, index)
        self.phase = Phase.REGISTRATION_OPEN
        self.registrations: dict[bytes, Registration] = {}
        self.reputable: set[bytes] = set()
        self.last_meetup: dict[bytes, int] = {}
        self.assignment: MeetupAssignment | None = None
        self.member_meetup: dict[bytes, int] = {}
        self.claims: dict[bytes, ClaimOfAttendance] = {}
        self.attesters: dict[bytes, frozenset[bytes]] = {}
        self.result: ValidationResult | None = None
        self.proofs: dict[bytes, ReputationProof] = {}
        self._times: dict[int, datetime] = {}
        self._windows: dict[int, float] = {}

    def _emit(self, t: datetime, kind: str, payload: dict) -> None:
        if self.log is not None:
            self.log.append(t, self.index, self.config.id, kind, payload)

    # -- registration -------------------------------------------------------

    def register(self, reg: Registration, now: datetime) -> bool:
        """Record a registration; returns whether its reputation proof was accepted."""
        if now > self.schedule.registration_close:
            raise TooLate(f"registration closed at {self.schedule.registration_close.isoformat()}")
        if self.phase is not Phase.REGISTRATION_OPEN:
            raise PhaseError(f"registration not open (phase {self.phase.name})")
        if reg.currency != self.config.id:
            raise UnknownParticipant("registration for another currency")
        if reg.onetime_key in self.registrations:
            raise DuplicateKey(reg.onetime_key.hex())
        proof_ok = False
        proof = reg.reputation
        if proof is not None:
            if self.index - proof.ceremony >= REPUTATION_HORIZON:
                raise StaleReputation(f"proof from ceremony {proof.ceremony} is too old for {self.index}")
            proof_ok = proof.ceremony < self.index and self.store.redeem(proof)
        self.registrations[reg.onetime_key] = reg
        if proof_ok:
            self.reputable.add(reg.onetime_key)
            self.last_meetup[reg.onetime_key] = proof.meetup
        self._emit(
            now,
            "register",
            {"key": reg.onetime_key, "proof": proof.to_dict() if proof else None, "reputable": proof_ok},
        )
        return proof_ok

    # -- clock --------------------------------------------------------------

    def meetup_time(self, meetup: int) -> datetime:
        return self._times[meetup]

    def meetup_window(self, meetup: int) -> float:
        """Latecomer window in seconds at the meetup's location."""
        return self._windows[meetup]

    def meetup_start(self) -> datetime:
        if self._times:
            return min(self._times.values())
        return self.schedule.registration_close + self.schedule.close_offset

    def witnessing_start(self) -> datetime:
        if self._times:
            return max(t + timedelta(seconds=self._windows[m]) for m, t in self._times.items())
        return self.meetup_start()

    def advance_phase(self, now: datetime) -> Phase:
        if self.phase is Phase.REGISTRATION_OPEN and now >= self.schedule.registration_close:
            self._assign(self.schedule.registration_close)
            self.phase = Phase.ASSIGNED
        if self.phase is Phase.ASSIGNED and now >= self.meetup_start():
            self.phase = Phase.MEETUP
        if self.phase is Phase.MEETUP and now >= self.witnessing_start():
            self.phase = Phase.WITNESSING
        if self.phase is Phase.WITNESSING and now >= self.schedule.witnessing_end:
            self._validate(self.schedule.witnessing_end)
            self.phase = Phase.VALIDATED
        return self.phase

    def _assign(self, t: datetime) -> None:
        # tokens older than the previous ceremony can never be redeemed again
        self.store.expire(self.index - REPUTATION_HORIZON + 1)
        regs = [
            Registrant(k, k in self.reputable, self.last_meetup.get(k))
            for k in self.registrations
        ]
        try:
            self.assignment = assign(regs, self.config.locations, f"{self.seed}:{self.index}", self.index)
        except TooFewParticipants:
            self.assignment = MeetupAssignment(self.index, (), tuple((r.key, TOO_FEW) for r in regs))
        multi = len(self.config.locations) > 1
        for m in self.assignment.meetups:
            self._times[m.index] = self.schedule.time_at(m.location)
            self._windows[m.index] = time_window(self.config.locations, m.location, self.config.timing) if multi else 0.0
            for k in m.members:
                self.member_meetup[k] = m.index
        self._emit(t, "assign", self.assignment.to_dict())

    # -- witnessing ---------------------------------------------------------

    def submit_attestation_bundle(self, participant: bytes, bundle: AttestationBundle, now: datetime) -> int:
        """Store a participant's bundle after intake filtering; returns the
        number of attestations kept. A later submission replaces an earlier one."""
        self.advance_phase(now)
        if self.phase is Phase.VALIDATED:
            raise OutsideWitnessingWindow("witnessing is closed")
        if self.phase is not Phase.WITNESSING:
            raise PhaseError(f"witnessing not open (phase {self.phase.name})")
        m = self.member_meetup.get(participant)
        if m is None:
            raise UnknownParticipant(participant.hex())
        if now > self._times[m] + self.schedule.witnessing_window:
            raise OutsideWitnessingWindow(f"witnessing for meetup {m} is closed")
        members = frozenset(self.assignment.meetups[m].members)
        claim, attesters = filter_bundle(
            bundle,
            submitter=participant,
            ceremony=self.index,
            meetup=m,
            members=members,
            verify_signatures=self.verify_signatures,
        )
        if claim is None:
            self.claims.pop(participant, None)
            self.attesters.pop(participant, None)
        else:
            self.claims[participant] = claim
            self.attesters[participant] = attesters
        if self.log is not None and self.log.wants("attest"):
            self._emit(now, "claim", {"claim": bundle.claim.to_dict()})
            self._emit(now, "attest", {"participant": participant, "bundle": bundle.to_dict(), "kept": len(attesters)})
        return len(attesters)

    # -- validation ---------------------------------------------------------

    def meetup_registry(self, m: int) -> MeetupRegistry:
        meetup = self.assignment.meetups[m]
        members = meetup.members
        reg = MeetupRegistry(self.index, m, members, frozenset(k for k in members if k in self.reputable))
        for k in members:
            if k in self.claims:
                reg.votes[k] = self.claims[k].vote
                reg.attesters[k] = self.attesters[k]
        return reg

    def _validate(self, t: datetime) -> None:
        result = ValidationResult(self.index)
        for meetup in self.assignment.meetups:
            mv = evaluate_meetup(self.meetup_registry(meetup.index))
            result.meetups[meetup.index] = mv
            self._emit(
                t,
                "validate",
                {
                    "meetup": meetup.index,
                    "m_bar": sorted(mv.m_bar),
                    "m_hat": sorted(mv.m_hat),
                    "nu_hat": mv.nu_hat,
                    "valid": sorted(mv.valid),
                },
            )
        self.result = result
        mint_times = {m: self._times[m] + self.schedule.witnessing_window for m in self._times}
        rng = random.Random(f"tokens:{self.seed}:{self.index}")
        self.proofs = issue(
            result, self.ledger, self.store, mint_times, rng, reward=self.config.reward, payout=self.payout
        )
