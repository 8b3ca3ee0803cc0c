"""Agent-based scenario engine.

A scenario bootstraps one currency, then drives repeated ceremonies on a
simulated clock: registration, assignment, meetups (with adversarial
behaviours), witnessing, validation and issuance, followed by a spending
round between ceremonies. Above ``agent_limit`` identities an all-honest
population is continued with counters instead of individual agents.
"""

from __future__ import annotations

import gc
import hashlib
import json
import math
import random
from collections import Counter, defaultdict
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from . import crypto
from .assignment import max_admissible_newbies
from .ceremony import Ceremony, Registration, schedule
from .crypto import KeyPair
from .errors import InvariantViolation, MalformedInput, ProtocolError, UnknownParticipant
from .events import EventLog
from .geo import TimingParams, grid_locations
from .ledger import Ledger, SupplySeries, decay_factor, from_units
from .meetup import MeetupMember, oversigner_vote, run_meetup
from .registry import DEFAULT_GENESIS, Registry
from .validation import ReputationProof

# -- behaviours -------------------------------------------------------------


@dataclass(frozen=True)
class Honest:
    kind = "honest"


@dataclass(frozen=True)
class NoShow:
    """Registers every ceremony but stays away with probability ``prob``."""

    prob: float = 1.0
    kind = "noshow"

    def __post_init__(self):
        if not 0 <= self.prob <= 1:
            raise ValueError("no-show probability must be in [0, 1]")


@dataclass(frozen=True)
class Oversigner:
    """Attends, presents ``extra`` ghost keys and votes the head count plus ``extra``."""

    extra: int = 1
    kind = "oversigner"

    def __post_init__(self):
        if self.extra < 1:
            raise ValueError("an oversigner needs at least one ghost key")


@dataclass(frozen=True)
class VideoconfSybil:
    """One human controlling ``ring`` identities that only ever attend remotely,
    colluding with every other remote identity."""

    ring: int = 2
    kind = "videoconf"

    def __post_init__(self):
        if self.ring < 2:
            raise ValueError("a sybil ring has at least two identities")


@dataclass(frozen=True)
class Flooder:
    """Attends honestly and registers ``fakes`` never-attending identities per ceremony."""

    fakes: int = 1
    kind = "flooder"

    def __post_init__(self):
        if self.fakes < 1:
            raise ValueError("a flooder registers at least one fake")


Behavior = Honest | NoShow | Oversigner | VideoconfSybil | Flooder
BEHAVIORS = {b.kind: b for b in (Honest, NoShow, Oversigner, VideoconfSybil, Flooder)}


def behavior_from_dict(d: dict) -> Behavior:
    d = dict(d)
    kind = d.pop("behavior", None)
    d.pop("fraction", None)
    if kind not in BEHAVIORS:
        raise MalformedInput(f"unknown behavior {kind!r}")
    try:
        return BEHAVIORS[kind](**d)
    except (TypeError, ValueError) as exc:
        raise MalformedInput(f"behavior {kind}: {exc}") from exc


def behavior_to_dict(b: Behavior) -> dict:
    return {"behavior": b.kind, **asdict(b)}


# -- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class CurrencyParams:
    reward: float = 1.0
    demurrage_rate_per_month: float = 0.07
    fee_fraction_of_reward: float = 0.0
    meetup_interval_days: int = 41
    v_max_kmh: float = 300.0
    locations: int | None = None  # None: sized from the population
    location_spacing_m: float = 50.0
    center: tuple[float, float] = (47.3769, 8.5417)
    genesis_date: date = DEFAULT_GENESIS


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    currency: CurrencyParams = CurrencyParams()
    population: int = 100
    mix: tuple[tuple[Behavior, float], ...] = ((Honest(), 1.0),)
    ceremonies: int = 10
    velocity: float = 1.0
    seed: int | None = None
    initial_reputable: int | None = None  # None: everyone starts reputable
    newbie_demand: int | None = 0  # newcomers per ceremony; None: unbounded
    agent_limit: int = 100_000
    signatures: bool = True
    record_events: bool = False

    def __post_init__(self):
        total = sum(f for _, f in self.mix)
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"behavior fractions sum to {total}, not 1")
        if any(f < 0 for _, f in self.mix):
            raise ValueError("behavior fractions must be non-negative")
        if self.ceremonies < 1:
            raise ValueError("run at least one ceremony")
        if self.population < 1:
            raise ValueError("population must be positive")
        if self.velocity < 0:
            raise ValueError("velocity must be non-negative")
        if self.initial_reputable is not None and not 0 <= self.initial_reputable <= self.population:
            raise ValueError("initial_reputable must be within the population")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            d = dict(d)
            cur = dict(d.pop("currency", {}))
            if "genesis_date" in cur:
                cur["genesis_date"] = date.fromisoformat(cur["genesis_date"])
            if "center" in cur:
                cur["center"] = tuple(cur["center"])
            mix = tuple((behavior_from_dict(e), float(e["fraction"])) for e in d.pop("mix", [{"behavior": "honest", "fraction": 1.0}]))
            demand = d.pop("newbie_demand", 0)
            if demand == "unbounded":
                demand = None
            return cls(currency=CurrencyParams(**cur), mix=mix, newbie_demand=demand, **d)
        except (TypeError, ValueError, KeyError) as exc:
            raise MalformedInput(f"scenario config: {exc}") from exc

    def to_dict(self) -> dict:
        cur = asdict(self.currency)
        cur["genesis_date"] = self.currency.genesis_date.isoformat()
        cur["center"] = list(self.currency.center)
        return {
            "name": self.name,
            "currency": cur,
            "population": self.population,
            "mix": [dict(behavior_to_dict(b), fraction=f) for b, f in self.mix],
            "ceremonies": self.ceremonies,
            "velocity": self.velocity,
            "seed": self.seed,
            "initial_reputable": self.initial_reputable,
            "newbie_demand": "unbounded" if self.newbie_demand is None else self.newbie_demand,
            "agent_limit": self.agent_limit,
            "signatures": self.signatures,
            "record_events": self.record_events,
        }


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        return ScenarioConfig.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{path}: {exc}") from exc


# -- report -----------------------------------------------------------------


@dataclass
class CeremonyStats:
    index: int
    t_days: float
    mode: str
    reputables: int
    newbies_admitted: int
    assigned: int
    meetups: int
    minted: int
    supply: float
    present_persons: int
    premise_all: bool
    honest_rewards_lost: int


@dataclass
class AttackRow:
    attempted: int = 0
    succeeded: int = 0
    rewards: int = 0
    excess_tokens: float = 0.0
    excess_tokens_under_premise: float = 0.0
    fakes_admitted: int = 0


@dataclass
class ScenarioReport:
    name: str
    seed: int
    currency: str
    ceremonies: list[CeremonyStats] = field(default_factory=list)
    supply: SupplySeries = field(default_factory=SupplySeries)
    attacks: dict[str, AttackRow] = field(default_factory=dict)
    log: EventLog | None = None

    @property
    def final_supply(self) -> float:
        return self.ceremonies[-1].supply

    @property
    def population_series(self) -> list[int]:
        return [c.reputables + c.newbies_admitted for c in self.ceremonies]

    def attack_csv(self) -> str:
        cols = list(AttackRow.__dataclass_fields__)
        lines = ["behavior," + ",".join(cols)]
        for kind in sorted(self.attacks):
            row = asdict(self.attacks[kind])
            lines.append(kind + "," + ",".join(_fmt(row[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "currency": self.currency,
            "final_supply": self.final_supply,
            "ceremonies": [asdict(c) for c in self.ceremonies],
            "attacks": {k: asdict(v) for k, v in sorted(self.attacks.items())},
        }


def _fmt(x) -> str:
    return f"{x:.12f}" if isinstance(x, float) else str(x)


def attack_report(report: ScenarioReport) -> dict[str, AttackRow]:
    """Per-behaviour attack table; all zeros for an all-honest run."""
    return {k: v for k, v in sorted(report.attacks.items())}


# -- agents -----------------------------------------------------------------


@dataclass
class Person:
    pid: int
    behavior: Behavior
    controller: int
    account: bytes
    proof: ReputationProof | None = None


def _allocate(mix, humans: int) -> list[Behavior]:
    """Largest-remainder rounding of behaviour fractions to head counts."""
    raw = [(f * humans, b) for b, f in mix]
    counts = [int(x) for x, _ in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i][0] - counts[i]), i))
    for i in order[: humans - sum(counts)]:
        counts[i] += 1
    out: list[Behavior] = []
    for (x, b), c in zip(raw, counts):
        out.extend([b] * c)
    return out


def spending_step(ledger: Ledger, velocity: float, rng: random.Random, now: datetime) -> int:
    """Random pairwise transfers moving about ``velocity`` times the supply.

    In each round every account pays a share of its balance (capped so the
    fee stays payable) to a uniformly drawn other account; velocity 2.5 means
    two full rounds and one paying half. Returns the transfer count.
    """
    if velocity < 0:
        raise ValueError("velocity must be non-negative")
    keys = sorted(ledger.accounts)
    if velocity == 0 or len(keys) < 2:
        return 0
    ledger.settle(now)  # later balance reads at ``now`` then skip the decay
    rounds = [1.0] * int(velocity) + ([velocity % 1] if velocity % 1 else [])
    n = len(keys)
    count = 0
    for share in rounds:
        planned = {k: int(ledger.accounts[k].principal * share) for k in keys}
        order = list(keys)
        rng.shuffle(order)
        for k in order:
            amount = min(planned[k], ledger.accounts[k].principal - ledger.fee_units)
            if amount <= 0:
                continue
            j = rng.randrange(n - 1)
            dst = keys[j] if keys[j] != k else keys[n - 1]
            ledger.transfer_units(k, dst, amount, now)
            count += 1
    return count


@contextmanager
def _gc_paused():
    # a ceremony allocates hundreds of thousands of short-lived acyclic objects;
    # generational collection during that burst costs about a third of the runtime
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()
            gc.collect(1)


def _premise(reps_here: list[bytes], honest_present: list[bytes]) -> bool:
    """Honest, present reputables hold a strict majority of the meetup's reputables."""
    return 2 * len(honest_present) > len(reps_here)


class _Run:
    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.rng = random.Random(f"scenario:{seed}")
        self.log = EventLog() if cfg.record_events else None
        self.people: list[Person] = []

    def _new_person(self, behavior: Behavior, controller: int | None = None) -> Person:
        pid = len(self.people)
        account = crypto.derive_seed(self.seed, "account", pid)
        p = Person(pid, behavior, pid if controller is None else controller, account)
        self.people.append(p)
        return p

    def _keypair(self, *label) -> KeyPair:
        seed = crypto.derive_seed(self.seed, *label)
        if self.cfg.signatures:
            return crypto.generate_keypair(seed)
        # unsigned mode: the derived seed doubles as an opaque public key
        return KeyPair(seed, b"")

    def _estimate_identities(self) -> int:
        cfg = self.cfg
        per_human = max(
            (b.ring if isinstance(b, VideoconfSybil) else 1) + (b.fakes if isinstance(b, Flooder) else 0)
            for b, _ in cfg.mix
        )
        cap = cfg.agent_limit * 4 // 3 + 24
        if cfg.newbie_demand is None:
            return cap
        return min(cap, cfg.population * per_human + cfg.newbie_demand * cfg.ceremonies)

    def run(self) -> ScenarioReport:
        cfg, cp = self.cfg, self.cfg.currency
        n_loc = cp.locations or max(64, 2 * math.ceil(self._estimate_identities() / 12) + 16)
        locations = grid_locations(n_loc, cp.center, cp.location_spacing_m)

        behaviors = _allocate(cfg.mix, cfg.population)
        self.rng.shuffle(behaviors)
        # honest people first: they make up the founders and the initial reputables
        behaviors.sort(key=lambda b: not isinstance(b, Honest))
        for b in behaviors:
            controller = len(self.people)
            for _ in range(b.ring if isinstance(b, VideoconfSybil) else 1):
                self._new_person(b, controller)

        founders = self.people[: min(12, len(self.people))]
        if len(founders) < 3:
            raise ProtocolError("a scenario needs at least three founders")
        founder_keys = [self._keypair("founder", p.pid) for p in founders]
        self.registry = Registry(log=self.log)
        timing = TimingParams(v_max_kmh=cp.v_max_kmh, meetup_interval_days=cp.meetup_interval_days)
        cur = self.registry.bootstrap_currency(
            founder_keys,
            locations,
            reward=cp.reward,
            demurrage_rate_per_month=cp.demurrage_rate_per_month,
            fee_fraction_of_reward=cp.fee_fraction_of_reward,
            timing=timing,
            genesis_date=cp.genesis_date,
            seed=self.seed,
        )
        self.cid = cur.id
        self.ledger = self.registry.ledger(cur.id)
        store = self.registry.reputation(cur.id)
        fproofs = self.registry.founder_proofs(cur.id)
        for p, k in zip(founders, founder_keys):
            p.proof = fproofs[k.public]

        n_rep = len(self.people) if cfg.initial_reputable is None else cfg.initial_reputable
        genesis_rng = random.Random(f"genesis:{self.seed}")
        for p in self.people[len(founders) : n_rep]:
            # a pre-existing community that met at the founding round in groups of 12
            p.proof = store.issue(0, p.pid // 12, genesis_rng)

        report = ScenarioReport(cfg.name, self.seed, cur.id.hex(), log=self.log)
        report.attacks = {b.kind: AttackRow() for b, f in cfg.mix if not isinstance(b, Honest) and f > 0}
        counters = None
        for i in range(1, cfg.ceremonies + 1):
            if counters is None and self._projected_participants() > cfg.agent_limit:
                counters = self._enter_counter_mode(report)
            if counters is not None:
                self._counter_ceremony(i, counters, report)
            else:
                with _gc_paused():
                    self._agent_ceremony(i, report)
        return report

    def _projected_participants(self) -> int:
        reps = sum(1 for p in self.people if p.proof is not None)
        waiting = len(self.people) - reps
        demand = reps if self.cfg.newbie_demand is None else waiting + self.cfg.newbie_demand
        return reps + max_admissible_newbies(reps, demand)

    # -- one ceremony with individual agents -------------------------------

    def _agent_ceremony(self, i: int, report: ScenarioReport) -> None:
        cfg = self.cfg
        sched = schedule(self.registry.config(self.cid, i), i)
        t_reg = sched.registration_close - timedelta(hours=1)
        cur = self.registry.begin_ceremony(self.cid, i, t_reg)

        if cfg.newbie_demand is None:
            reps = sum(1 for p in self.people if p.proof is not None)
            for _ in range(reps // 3 + 12 - (len(self.people) - reps)):
                self._new_person(Honest())
        else:
            for _ in range(cfg.newbie_demand):
                self._new_person(Honest())

        owner: dict[bytes, Person] = {}
        fake_owner: dict[bytes, Person] = {}
        cer = Ceremony(
            cur,
            i,
            reputation=self.registry.reputation(self.cid),
            ledger=self.ledger,
            log=self.log,
            seed=self.seed,
            verify_signatures=cfg.signatures,
            payout=lambda k: owner[k].account if k in owner else k,
        )
        keys: dict[bytes, KeyPair] = {}
        for p in self.people:
            kp = self._keypair("onetime", p.pid, i)
            proof = p.proof if p.proof is not None and i - p.proof.ceremony < 2 else None
            cer.register(Registration(kp.public, self.cid, t_reg, proof), t_reg)
            owner[kp.public] = p
            keys[kp.public] = kp
            p.proof = None
            if isinstance(p.behavior, Flooder):
                for f in range(p.behavior.fakes):
                    fk = self._keypair("fake", p.pid, i, f)
                    cer.register(Registration(fk.public, self.cid, t_reg, None), t_reg)
                    fake_owner[fk.public] = p
                    keys[fk.public] = fk
                    if "flooder" in report.attacks:
                        report.attacks["flooder"].attempted += 1

        cer.advance_phase(sched.registration_close)
        admitted = [k for m in cer.assignment.meetups for k in m.members]
        reputable_admitted = sum(1 for k in admitted if k in cer.reputable)
        newbies_admitted = len(admitted) - reputable_admitted

        presence_rng = random.Random(f"presence:{self.seed}:{i}")
        bundles = {}
        premise: dict[int, bool] = {}
        present_persons = 0
        for m in cer.assignment.meetups:
            present = {}
            for k in m.members:
                b = owner[k].behavior if k in owner else None
                if b is None or isinstance(b, VideoconfSybil):
                    present[k] = False
                elif isinstance(b, NoShow):
                    present[k] = presence_rng.random() >= b.prob
                else:
                    present[k] = True
            head = sum(present.values())
            present_persons += head
            reps_here = [k for k in m.members if k in cer.reputable]
            honest_present = [k for k in reps_here if present[k] and isinstance(owner[k].behavior, Honest)]
            premise[m.index] = _premise(reps_here, honest_present)
            ring = [k for k in m.members if k in owner and isinstance(owner[k].behavior, VideoconfSybil)]
            ring_reps = sum(1 for k in ring if k in cer.reputable)
            # with a reputable majority the ring sets the vote; otherwise it mimics the honest count
            ring_vote = len(ring) if 2 * ring_reps > len(reps_here) else max(head, 1)

            members = []
            for k in m.members:
                b = owner[k].behavior if k in owner else None
                if isinstance(b, VideoconfSybil):
                    members.append(MeetupMember(keys[k], present=False, vote=ring_vote, colluder_group="videoconf"))
                elif isinstance(b, Oversigner):
                    ghosts = tuple(self._keypair("ghost", owner[k].pid, i, g) for g in range(b.extra))
                    members.append(MeetupMember(keys[k], vote=oversigner_vote(head, b.extra), ghosts=ghosts))
                    report.attacks["oversigner"].attempted += 1
                else:
                    members.append(MeetupMember(keys[k], present=present[k]))
                    if isinstance(b, NoShow) and not present[k]:
                        report.attacks["noshow"].attempted += 1
            outcome = run_meetup(
                members,
                cer.meetup_time(m.index),
                cer.meetup_window(m.index),
                ceremony=i,
                meetup=m.index,
                seed=self.seed,
                sign=cfg.signatures,
            )
            bundles.update(outcome.bundles)

        t_wit = cer.witnessing_start()
        cer.advance_phase(t_wit)
        for key in sorted(bundles):
            try:
                cer.submit_attestation_bundle(key, bundles[key], t_wit)
            except UnknownParticipant:
                pass  # ghost keys were never registered
        cer.advance_phase(sched.witnessing_end)

        for k, proof in cer.proofs.items():
            if k in owner:
                owner[k].proof = proof
        valid = cer.result.valid if cer.result else frozenset()
        if "flooder" in report.attacks:
            report.attacks["flooder"].fakes_admitted += sum(1 for k in admitted if k in fake_owner)
        if "videoconf" in report.attacks:
            report.attacks["videoconf"].attempted += sum(
                1 for k in admitted if k in owner and isinstance(owner[k].behavior, VideoconfSybil)
            )
        self._account_attacks(report, valid, owner, fake_owner, premise, cer)
        self._check_invariants(cer, reputable_admitted, newbies_admitted)

        honest_lost = sum(1 for k in admitted if k in owner and isinstance(owner[k].behavior, Honest) and k not in valid)
        t_end = sched.witnessing_end
        supply = self.ledger.supply(t_end)
        genesis = datetime.combine(cur.genesis_date, datetime.min.time(), tzinfo=timezone.utc)
        t_days = (t_end - genesis).total_seconds() / 86400
        report.supply.record(t_days, self.cid, supply)
        report.ceremonies.append(
            CeremonyStats(
                i,
                t_days,
                "agents",
                reputable_admitted,
                newbies_admitted,
                len(admitted),
                len(cer.assignment.meetups),
                len(valid),
                supply,
                present_persons,
                all(premise.values()),
                honest_lost,
            )
        )
        mid = t_end + timedelta(days=cur.timing.meetup_interval_days / 2)
        spending_step(self.ledger, cfg.velocity, random.Random(f"spend:{self.seed}:{i}"), mid)

    def _account_attacks(self, report, valid, owner, fake_owner, premise, cer: Ceremony) -> None:
        reward = self.ledger.reward
        per_controller: Counter = Counter()
        kind_of: dict[int, str] = {}
        premise_ok: dict[int, bool] = defaultdict(lambda: True)
        for k in valid:
            p = owner.get(k) or fake_owner.get(k)
            if p is None or isinstance(p.behavior, Honest):
                continue
            per_controller[p.controller] += 1
            kind_of[p.controller] = p.behavior.kind
            premise_ok[p.controller] &= premise[cer.member_meetup[k]]
        for ctrl, n in per_controller.items():
            row = report.attacks[kind_of[ctrl]]
            row.rewards += n
            excess = max(0, n - 1) * reward
            if excess:
                row.succeeded += 1
                row.excess_tokens += excess
                if premise_ok[ctrl]:
                    row.excess_tokens_under_premise += excess

    def _check_invariants(self, cer: Ceremony, reps: int, newbies: int) -> None:
        seen: set[bytes] = set()
        for m in cer.assignment.meetups:
            if not 3 <= m.size <= 12:
                raise InvariantViolation(f"ceremony {cer.index}: meetup size {m.size}")
            if 4 * sum(1 for k in m.members if k not in cer.reputable) > m.size:
                raise InvariantViolation(f"ceremony {cer.index}: newbie quota exceeded")
            if seen.intersection(m.members):
                raise InvariantViolation(f"ceremony {cer.index}: participant in two meetups")
            seen.update(m.members)
        if 3 * newbies > reps:
            raise InvariantViolation(f"ceremony {cer.index}: admitted newbies exceed a third of reputables")
        led = self.ledger
        if led.total_principal() != led.minted - led.burned - led.demurrage:
            raise InvariantViolation("ledger principal does not match issuance and burn totals")

    # -- population counters ------------------------------------------------

    def _enter_counter_mode(self, report: ScenarioReport) -> dict:
        if any(not isinstance(b, Honest) for b, f in self.cfg.mix if f > 0):
            raise ProtocolError("counter mode only models all-honest populations")
        if not report.ceremonies:
            raise ProtocolError("population exceeds agent_limit before the first ceremony")
        last = report.ceremonies[-1]
        return {"reputables": last.minted, "supply": last.supply, "t_days": last.t_days}

    def _counter_ceremony(self, i: int, st: dict, report: ScenarioReport) -> None:
        cfg = self.cfg
        cur = self.registry.config(self.cid, i)
        r = st["reputables"]
        demand = r if cfg.newbie_demand is None else cfg.newbie_demand
        b = max_admissible_newbies(r, demand)
        minted = r + b
        interval = cur.timing.meetup_interval_days
        # one fee-paying transfer per account between ceremonies
        burn = from_units(self.ledger.fee_units) * r if cfg.velocity > 0 else 0.0
        decayed = max(0.0, st["supply"] - burn) * decay_factor(interval, cur.demurrage_rate_per_month)
        st["supply"] = decayed + minted * cur.reward
        st["t_days"] += interval
        st["reputables"] = minted
        report.supply.record(st["t_days"], self.cid, st["supply"])
        report.ceremonies.append(
            CeremonyStats(
                i, st["t_days"], "counters", r, b, minted, math.ceil(minted / 12), minted, st["supply"], minted, True, 0
            )
        )


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Run a scenario; a missing seed is drawn from system entropy (and is in the report)."""
    seed = cfg.seed if cfg.seed is not None else random.SystemRandom().randrange(2**63)
    return _Run(cfg, seed).run()


def report_digest(report: ScenarioReport) -> str:
    """SHA-256 over the report's CSV outputs, for reproducibility checks."""
    h = hashlib.sha256()
    h.update(report.supply.to_csv().encode())
    h.update(report.attack_csv().encode())
    h.update(json.dumps(report.summary(), sort_keys=True).encode())
    return h.hexdigest()
