"""Randomized assignment of registrants to meetups.

Hard constraints: meetup sizes in [3, 12], at most floor(N/4) members without
reputation per meetup, disjoint members, distinct locations drawn from the
currency's location set. Soft objective: few pairs that already met at the
previous ceremony. The exact problem is NP-hard; this is a greedy heuristic.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .errors import InsufficientLocations, TooFewParticipants
from .geo import Location, LocationSet

MIN_MEETUP = 3
MAX_MEETUP = 12
NEWBIE_DIVISOR = 4  # newbies per meetup <= floor(N / 4)

QUOTA = "quota"
TOO_FEW = "too-few"


@dataclass(frozen=True)
class Registrant:
    key: bytes
    reputable: bool
    last_meetup: int | None = None  # meetup index at the previous ceremony


@dataclass(frozen=True)
class Meetup:
    index: int
    location: Location
    members: tuple[bytes, ...]
    newbies: tuple[bytes, ...]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class MeetupAssignment:
    ceremony: int
    meetups: tuple[Meetup, ...]
    excluded: tuple[tuple[bytes, str], ...] = ()

    def meetup_of(self) -> dict[bytes, int]:
        return {k: m.index for m in self.meetups for k in m.members}

    @property
    def assigned(self) -> int:
        return sum(m.size for m in self.meetups)

    def to_dict(self) -> dict:
        return {
            "ceremony": self.ceremony,
            "meetups": [
                {
                    "index": m.index,
                    "location": m.location.id,
                    "members": [k.hex() for k in m.members],
                    "newbies": [k.hex() for k in m.newbies],
                }
                for m in self.meetups
            ],
            "excluded": [{"key": k.hex(), "reason": r} for k, r in self.excluded],
        }


def _newbie_quota(size: int) -> int:
    return size // NEWBIE_DIVISOR


def plan_sizes(n: int, newbies: int = 0) -> list[int]:
    """Meetup sizes for ``n`` participants of which ``newbies`` lack reputation.

    Uses ceil(n/12) meetups. Newbies are spread evenly, each meetup is made
    just large enough to host its share under the quota, and the remaining
    seats are water-filled so sizes end up as equal as the quota allows.
    """
    if n < MIN_MEETUP:
        raise TooFewParticipants(f"need at least {MIN_MEETUP} participants, got {n}")
    k = math.ceil(n / MAX_MEETUP)
    base, extra = divmod(newbies, k)
    lows = [max(MIN_MEETUP, NEWBIE_DIVISOR * (base + (j < extra))) for j in range(k)]
    if sum(lows) > n or max(lows) > MAX_MEETUP:
        raise ValueError(f"{newbies} newbies cannot be seated among {n} participants")
    heap = [(s, j) for j, s in enumerate(lows)]
    heapq.heapify(heap)
    sizes = list(lows)
    for _ in range(n - sum(lows)):
        s, j = heapq.heappop(heap)
        sizes[j] = s + 1
        heapq.heappush(heap, (s + 1, j))
    return sizes


def partition_sizes(n: int) -> list[int]:
    """ceil(n/12) meetup sizes differing by at most one."""
    return sorted(plan_sizes(n, 0), reverse=True)


def max_admissible_newbies(reputables: int, candidates: int) -> int:
    """Largest newbie count the quota allows next to ``reputables``."""
    b = min(candidates, reputables // (NEWBIE_DIVISOR - 1))
    while b > 0 and reputables + b < MIN_MEETUP:
        b -= 1
    return b


def adoption_horizon(start: int, target: int) -> int:
    """Ceremonies needed to grow from ``start`` to ``target`` when each ceremony
    adds at most a third of the current reputable population."""
    if start < MIN_MEETUP or target < start:
        raise ValueError("need start >= 3 and target >= start")
    c = 0
    while start * 4**c < target * 3**c:
        c += 1
    return c


class _OpenSet:
    """Indices with O(1) removal and uniform sampling."""

    def __init__(self, items: Iterable[int]):
        self.items = list(items)
        self.pos = {x: i for i, x in enumerate(self.items)}

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, x: int) -> bool:
        return x in self.pos

    def remove(self, x: int) -> None:
        i = self.pos.pop(x)
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def sample(self, rng: random.Random) -> int:
        return self.items[rng.randrange(len(self.items))]


def _seat_greedy(reps: Sequence[Registrant], capacity: list[int], rng: random.Random) -> list[list[bytes]]:
    seats: list[list[bytes]] = [[] for _ in capacity]
    free = list(capacity)
    open_ = _OpenSet(j for j, c in enumerate(free) if c > 0)
    # previous meetup -> {current meetup: members of that group seated there}
    groups: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for r in reps:
        conflicts = groups[r.last_meetup] if r.last_meetup is not None else {}
        busy = [j for j, c in conflicts.items() if c and j in open_]
        if len(busy) < len(open_):
            if len(busy) * 4 < len(open_):
                j = open_.sample(rng)
                while j in conflicts and conflicts[j]:
                    j = open_.sample(rng)
            else:
                busy_set = set(busy)
                j = rng.choice([x for x in open_.items if x not in busy_set])
        else:
            least = min(conflicts[j] for j in busy)
            j = rng.choice(sorted(x for x in busy if conflicts[x] == least))
        seats[j].append(r.key)
        if r.last_meetup is not None:
            groups[r.last_meetup][j] += 1
        free[j] -= 1
        if not free[j]:
            open_.remove(j)
    return seats


def _seat_uniform(reps: Sequence[Registrant], capacity: list[int], rng: random.Random) -> list[list[bytes]]:
    slots = [j for j, c in enumerate(capacity) for _ in range(c)]
    rng.shuffle(slots)
    seats: list[list[bytes]] = [[] for _ in capacity]
    for r, j in zip(reps, slots):
        seats[j].append(r.key)
    return seats


def assign(
    registrants: Iterable[Registrant],
    locations: LocationSet,
    seed: int | str | bytes,
    ceremony: int = 0,
    *,
    minimize_repeats: bool = True,
) -> MeetupAssignment:
    """Partition registrants into meetups at random locations.

    Newbies beyond the quota are excluded with reason ``"quota"``. With
    ``minimize_repeats=False`` reputables are seated uniformly at random
    (the baseline the greedy heuristic is measured against).
    """
    rng = random.Random(seed if not isinstance(seed, bytes) else seed.hex())
    pool = sorted(registrants, key=lambda r: r.key)
    reps = [r for r in pool if r.reputable]
    newbies = [r for r in pool if not r.reputable]
    b = max_admissible_newbies(len(reps), len(newbies))
    n = len(reps) + b
    if n < MIN_MEETUP:
        raise TooFewParticipants(f"only {n} admissible participants")
    rng.shuffle(newbies)
    admitted, overflow = newbies[:b], newbies[b:]

    sizes = plan_sizes(n, b)
    if len(sizes) > len(locations):
        raise InsufficientLocations(f"{len(sizes)} meetups but only {len(locations)} locations")
    k = len(sizes)
    base, extra = divmod(b, k)
    quota = [base + (j < extra) for j in range(k)]

    # newbies dealt round-robin over the meetups' newbie allowances
    newbie_seats: list[list[bytes]] = [[] for _ in range(k)]
    order = list(range(k))
    rng.shuffle(order)
    it = iter(admitted)
    while any(len(newbie_seats[j]) < quota[j] for j in order):
        for j in order:
            if len(newbie_seats[j]) < quota[j]:
                newbie_seats[j].append(next(it).key)

    rng.shuffle(reps)
    capacity = [sizes[j] - quota[j] for j in range(k)]
    seat = _seat_greedy if minimize_repeats else _seat_uniform
    rep_seats = seat(reps, capacity, rng)

    picked = rng.sample(range(len(locations)), k)
    meetups = tuple(
        Meetup(j, locations[picked[j]], tuple(rep_seats[j] + newbie_seats[j]), tuple(newbie_seats[j]))
        for j in range(k)
    )
    excluded = tuple((r.key, QUOTA) for r in overflow)
    return MeetupAssignment(ceremony, meetups, excluded)


def _pairs(groups: Iterable[Iterable[bytes]], identity: Mapping[bytes, object] | None) -> set[frozenset]:
    out = set()
    for members in groups:
        ids = [identity.get(k, k) if identity is not None else k for k in members]
        out.update(frozenset(p) for p in combinations(ids, 2))
    return out


def repeat_pair_count(
    current: MeetupAssignment, previous: MeetupAssignment, identity: Mapping[bytes, object] | None = None
) -> int:
    """Unordered pairs co-assigned in both assignments.

    One-time keys change between ceremonies, so ``identity`` may map keys of
    either assignment to a stable person id.
    """
    return len(
        _pairs((m.members for m in current.meetups), identity) & _pairs((m.members for m in previous.meetups), identity)
    )


def rule_report(
    assignment: MeetupAssignment, registrants: Iterable[Registrant], locations: LocationSet
) -> dict:
    """Re-check the hard assignment constraints and count repeat pairs."""
    regs = {r.key: r for r in registrants}
    violations = []
    seen: set[bytes] = set()
    used: set[str] = set()
    if len(assignment.meetups) > len(locations):
        violations.append("more meetups than locations")
    for m in assignment.meetups:
        if not MIN_MEETUP <= m.size <= MAX_MEETUP:
            violations.append(f"meetup {m.index}: size {m.size} outside [3, 12]")
        unrep = [k for k in m.members if not regs[k].reputable] if all(k in regs for k in m.members) else None
        if unrep is None:
            violations.append(f"meetup {m.index}: member is not a registrant")
        elif Fraction(len(unrep), m.size) > Fraction(1, NEWBIE_DIVISOR):
            violations.append(f"meetup {m.index}: {len(unrep)} members without reputation of {m.size}")
        if seen & set(m.members):
            violations.append(f"meetup {m.index}: member assigned twice")
        seen.update(m.members)
        if m.location.id in used or m.location not in locations:
            violations.append(f"meetup {m.index}: location {m.location.id} reused or unknown")
        used.add(m.location.id)
    repeats = 0
    for m in assignment.meetups:
        last = [regs[k].last_meetup for k in m.members if k in regs and regs[k].last_meetup is not None]
        counts: dict[int, int] = defaultdict(int)
        for x in last:
            counts[x] += 1
        repeats += sum(c * (c - 1) // 2 for c in counts.values())
    return {
        "ceremony": assignment.ceremony,
        "meetups": len(assignment.meetups),
        "assigned": assignment.assigned,
        "excluded": len(assignment.excluded),
        "repeat_pairs": repeats,
        "violations": violations,
        "ok": not violations,
    }
