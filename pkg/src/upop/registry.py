"""Currency bootstrapping and governed parameter changes.

The trusted-setup ceremony is ceremony index 0; its founders receive
reputation bound to (0, meetup 0) so that ceremony 1, the first real one,
starts with a reputable core. Parameter changes become effective at the
ceremony after the one during which they pass.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field, replace
from datetime import date
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from . import crypto
from .crypto import KeyPair
from .errors import (
    DuplicateCurrency,
    InvalidLocations,
    MalformedInput,
    NoVotes,
    OutOfRange,
    RejectedByReferendum,
    UnknownCurrency,
)
from .events import EventLog
from .geo import LocationSet, TimingParams, load_locations
from .ledger import Ledger
from .validation import ReputationProof, ReputationStore

BOOTSTRAP_CEREMONY = 0
DEFAULT_GENESIS = date(2020, 1, 1)

GOVERNABLE = ("reward", "demurrage_rate_per_month", "fee_fraction_of_reward", "locations", "v_max_kmh")


@dataclass(frozen=True)
class CurrencyConfig:
    id: bytes
    locations: LocationSet
    reward: float
    demurrage_rate_per_month: float
    fee_fraction_of_reward: float
    timing: TimingParams
    bootstrap_keys: tuple[bytes, ...]
    genesis_date: date = DEFAULT_GENESIS

    def __post_init__(self) -> None:
        if self.reward <= 0:
            raise OutOfRange("reward must be positive")
        if not 0 <= self.demurrage_rate_per_month < 1:
            raise OutOfRange("demurrage rate must be in [0, 1)")
        if not 0 <= self.fee_fraction_of_reward < 1:
            raise OutOfRange("fee fraction must be in [0, 1)")
        if crypto.group_id(self.bootstrap_keys) != self.id:
            raise ValueError("currency id does not match its bootstrap keys")


class Origin(enum.Enum):
    ASSOCIATION = "association"
    COMMUNITY = "community"


class Outcome(enum.Enum):
    PASSES = "passes"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class Referendum:
    proposal: str
    voters_for: int
    voters_against: int
    stake_for: float = 0.0
    stake_against: float = 0.0
    origin: Origin = Origin.ASSOCIATION

    def __post_init__(self) -> None:
        if min(self.voters_for, self.voters_against, self.stake_for, self.stake_against) < 0:
            raise ValueError("vote counts and stakes must be non-negative")


def _two_thirds(part, total) -> bool:
    return 3 * Fraction(part) >= 2 * Fraction(total)


def tally_referendum(r: Referendum) -> Outcome:
    """Association proposals pass unless two thirds of voters object; community
    proposals need two thirds of voters and two thirds of stake in favour."""
    voters = r.voters_for + r.voters_against
    if voters == 0:
        raise NoVotes("referendum without votes")
    if r.origin is Origin.ASSOCIATION:
        return Outcome.BLOCKED if _two_thirds(r.voters_against, voters) else Outcome.PASSES
    stake = Fraction(r.stake_for) + Fraction(r.stake_against)
    if _two_thirds(r.voters_for, voters) and stake > 0 and _two_thirds(r.stake_for, stake):
        return Outcome.PASSES
    return Outcome.BLOCKED


@dataclass
class CurrencyRecord:
    versions: list[tuple[int, CurrencyConfig]]
    reputation: ReputationStore
    ledger: Ledger
    founder_proofs: dict[bytes, ReputationProof] = field(default_factory=dict)

    def config_for(self, index: int) -> CurrencyConfig:
        current = self.versions[0][1]
        for effective, cfg in self.versions:
            if effective <= index:
                current = cfg
        return current


class Registry:
    """All known currencies. Mutations are expected from a single writer."""

    def __init__(self, log: EventLog | None = None):
        self.log = log
        self._currencies: dict[bytes, CurrencyRecord] = {}

    def __contains__(self, currency_id: bytes) -> bool:
        return currency_id in self._currencies

    def _record(self, currency_id: bytes) -> CurrencyRecord:
        try:
            return self._currencies[currency_id]
        except KeyError:
            raise UnknownCurrency(currency_id.hex()) from None

    def bootstrap_currency(
        self,
        founders: Sequence[KeyPair | bytes],
        locations: LocationSet,
        *,
        reward: float = 1.0,
        demurrage_rate_per_month: float = 0.07,
        fee_fraction_of_reward: float = 0.0,
        timing: TimingParams = TimingParams(),
        genesis_date: date = DEFAULT_GENESIS,
        seed: int | str = 0,
    ) -> CurrencyConfig:
        keys = tuple(f.public if isinstance(f, KeyPair) else bytes(f) for f in founders)
        if not isinstance(locations, LocationSet):
            raise InvalidLocations("locations must be a validated LocationSet")
        cid = crypto.group_id(keys)
        if cid in self._currencies:
            raise DuplicateCurrency(cid.hex())
        cfg = CurrencyConfig(
            cid, locations, reward, demurrage_rate_per_month, fee_fraction_of_reward, timing, keys, genesis_date
        )
        store = ReputationStore()
        rng = random.Random(f"bootstrap:{seed}:{cid.hex()}")
        proofs = {k: store.issue(BOOTSTRAP_CEREMONY, 0, rng) for k in keys}
        ledger = Ledger(cid, reward, fee_fraction_of_reward, demurrage_rate_per_month, log=self.log)
        self._currencies[cid] = CurrencyRecord([(BOOTSTRAP_CEREMONY, cfg)], store, ledger, proofs)
        return cfg

    def config(self, currency_id: bytes, ceremony_index: int | None = None) -> CurrencyConfig:
        rec = self._record(currency_id)
        return rec.versions[-1][1] if ceremony_index is None else rec.config_for(ceremony_index)

    def ledger(self, currency_id: bytes) -> Ledger:
        return self._record(currency_id).ledger

    def reputation(self, currency_id: bytes) -> ReputationStore:
        return self._record(currency_id).reputation

    def founder_proofs(self, currency_id: bytes) -> dict[bytes, ReputationProof]:
        return dict(self._record(currency_id).founder_proofs)

    def update_params(
        self, currency_id: bytes, change: Mapping[str, object], outcome: Outcome, current_index: int
    ) -> CurrencyConfig:
        """Apply a passed change from ceremony ``current_index + 1`` on."""
        if outcome is not Outcome.PASSES:
            raise RejectedByReferendum("proposal did not pass its referendum")
        rec = self._record(currency_id)
        base = rec.versions[-1][1]
        fields = {}
        for name, value in change.items():
            if name not in GOVERNABLE:
                raise OutOfRange(f"{name!r} is not a governable parameter")
            if name == "v_max_kmh":
                try:
                    fields["timing"] = replace(base.timing, v_max_kmh=float(value))
                except ValueError as exc:
                    raise OutOfRange(str(exc)) from exc
            elif name == "locations":
                if not isinstance(value, LocationSet):
                    raise OutOfRange("locations must be a LocationSet")
                fields["locations"] = value
            else:
                fields[name] = float(value)
        new = replace(base, **fields)
        effective = current_index + 1
        rec.versions = [(e, c) for e, c in rec.versions if e < effective] + [(effective, new)]
        return new

    def begin_ceremony(self, currency_id: bytes, index: int, now) -> CurrencyConfig:
        """Config governing ceremony ``index``; brings the ledger's monetary
        parameters in line with it (settling balances at ``now`` on change)."""
        rec = self._record(currency_id)
        cfg = rec.config_for(index)
        led = rec.ledger
        if (led.reward, led.fee_fraction, led.d_month) != (
            cfg.reward,
            cfg.fee_fraction_of_reward,
            cfg.demurrage_rate_per_month,
        ):
            led.set_params(
                reward=cfg.reward,
                fee_fraction=cfg.fee_fraction_of_reward,
                d_month=cfg.demurrage_rate_per_month,
                now=now,
            )
        return cfg


# -- currency documents -----------------------------------------------------


def currency_document(cfg: CurrencyConfig, locations_file: str) -> dict:
    return {
        "id": cfg.id.hex(),
        "bootstrap_keys": [k.hex() for k in cfg.bootstrap_keys],
        "reward": cfg.reward,
        "demurrage_rate_per_month": cfg.demurrage_rate_per_month,
        "fee_fraction_of_reward": cfg.fee_fraction_of_reward,
        "meetup_interval_days": cfg.timing.meetup_interval_days,
        "v_max_kmh": cfg.timing.v_max_kmh,
        "genesis_date": cfg.genesis_date.isoformat(),
        "locations_file": locations_file,
    }


def load_currency_document(path: str | Path) -> CurrencyConfig:
    """Read a currency JSON document; ``locations_file`` is relative to it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        keys = tuple(bytes.fromhex(k) for k in doc["bootstrap_keys"])
        locations = load_locations(path.parent / doc["locations_file"])
        timing = TimingParams(
            v_max_kmh=float(doc.get("v_max_kmh", 300.0)),
            meetup_interval_days=int(doc["meetup_interval_days"]),
        )
        cfg = CurrencyConfig(
            bytes.fromhex(doc["id"]),
            locations,
            float(doc["reward"]),
            float(doc["demurrage_rate_per_month"]),
            float(doc["fee_fraction_of_reward"]),
            timing,
            keys,
            date.fromisoformat(doc.get("genesis_date", DEFAULT_GENESIS.isoformat())),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"{path}: {exc}") from exc
    return cfg
