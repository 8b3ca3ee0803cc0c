import math
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import check_assignment, growth_by_thirds, repeat_pairs
from upop.assignment import (
    QUOTA,
    Meetup,
    MeetupAssignment,
    Registrant,
    adoption_horizon,
    assign,
    max_admissible_newbies,
    partition_sizes,
    plan_sizes,
    repeat_pair_count,
    rule_report,
)
from upop.errors import InsufficientLocations, TooFewParticipants
from upop.geo import grid_locations

LOCS = grid_locations(100)


def key(i):
    return i.to_bytes(32, "big")


def population(reps, newbies, groups=None, offset=0):
    out = [Registrant(key(offset + i), True, None if groups is None else i // groups) for i in range(reps)]
    out += [Registrant(key(offset + reps + i), False) for i in range(newbies)]
    return out


def oracle_problems(a, regs, locs=LOCS):
    return check_assignment(
        [(m.location.id, list(m.members)) for m in a.meetups],
        {r.key for r in regs if r.reputable},
        {r.key for r in regs},
        {l.id for l in locs},
    )


def test_partition_sizes_examples():
    assert partition_sizes(12) == [12]
    assert partition_sizes(13) == [7, 6]
    assert partition_sizes(25) == [9, 8, 8]
    assert partition_sizes(3) == [3]
    with pytest.raises(TooFewParticipants):
        partition_sizes(2)


@given(st.integers(3, 5000))
def test_partition_sizes_properties(n):
    sizes = partition_sizes(n)
    assert sum(sizes) == n
    assert len(sizes) == math.ceil(n / 12)
    assert max(sizes) - min(sizes) <= 1
    assert all(3 <= s <= 12 for s in sizes)


@given(st.integers(0, 3000), st.integers(0, 3000))
def test_plan_sizes_respect_quota(reps, cands):
    b = max_admissible_newbies(reps, cands)
    if reps + b < 3:
        return
    sizes = plan_sizes(reps + b, b)
    k = len(sizes)
    base, extra = divmod(b, k)
    quotas = [base + (j < extra) for j in range(k)]
    assert sum(sizes) == reps + b
    assert all(3 <= s <= 12 for s in sizes)
    assert all(q <= s // 4 for q, s in zip(quotas, sizes))


def test_assign_24_reputables_8_newbies():
    regs = population(24, 8)
    a = assign(regs, LOCS, seed=1)
    assert sorted(m.size for m in a.meetups) == [8, 12, 12]
    assert a.assigned == 32 and not a.excluded
    assert oracle_problems(a, regs) == []
    # the balanced split {11, 11, 10} would seat at most 2 + 2 + 2 = 6 newbies
    assert sum(s // 4 for s in (11, 11, 10)) < 8


def test_assign_quota_overflow():
    regs = population(12, 100)
    a = assign(regs, LOCS, seed=2)
    assert sorted(m.size for m in a.meetups) == [8, 8]
    assert sum(len(m.newbies) for m in a.meetups) == 4
    assert len(a.excluded) == 96 and {r for _, r in a.excluded} == {QUOTA}
    assert oracle_problems(a, regs) == []


def test_assign_errors():
    with pytest.raises(TooFewParticipants):
        assign(population(2, 0), LOCS, seed=0)
    with pytest.raises(TooFewParticipants):
        assign(population(2, 5), LOCS, seed=0)  # 2 reputables admit no newbies
    with pytest.raises(InsufficientLocations):
        assign(population(40, 0), grid_locations(3), seed=0)


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 2**32))
def test_assign_hard_rules(reps, newbies, seed):
    regs = population(reps, newbies, groups=12)
    if reps + max_admissible_newbies(reps, newbies) < 3:
        with pytest.raises(TooFewParticipants):
            assign(regs, LOCS, seed)
        return
    a = assign(regs, LOCS, seed)
    assert oracle_problems(a, regs) == []
    assert rule_report(a, regs, LOCS)["ok"]
    assert a.assigned + len(a.excluded) == reps + newbies
    assert a.assigned == reps + max_admissible_newbies(reps, newbies)


def test_assign_is_deterministic():
    regs = population(100, 30, groups=12)
    assert assign(regs, LOCS, "s") == assign(list(reversed(regs)), LOCS, "s")
    assert assign(regs, LOCS, "s") != assign(regs, LOCS, "t")


def test_repeat_pair_count_examples():
    loc = LOCS[0]
    five = tuple(key(i) for i in range(5))
    a = MeetupAssignment(1, (Meetup(0, loc, five, ()),))
    assert repeat_pair_count(a, a) == 10
    other = MeetupAssignment(0, (Meetup(0, loc, tuple(key(i) for i in range(5, 10)), ()),))
    assert repeat_pair_count(a, other) == 0


def test_repeat_pair_count_matches_oracle():
    prev = assign(population(120, 0), LOCS, seed=1)
    cur = assign(population(120, 0), LOCS, seed=2)
    groups = lambda x: [m.members for m in x.meetups]
    assert repeat_pair_count(cur, prev) == repeat_pairs(groups(cur), groups(prev))


def _repeats(seed, minimize):
    prev = assign(population(120, 0), LOCS, seed=f"prev{seed}")
    last = prev.meetup_of()
    regs = [Registrant(k, True, last[k]) for k in sorted(last)]
    cur = assign(regs, LOCS, seed=seed, minimize_repeats=minimize)
    return repeat_pair_count(cur, prev)


def test_greedy_beats_uniform_baseline():
    greedy = [_repeats(s, True) for s in range(100)]
    uniform = [_repeats(s, False) for s in range(100)]
    assert sum(greedy) / 100 < sum(uniform) / 100


def test_location_selection_is_uniform():
    # 24 registrants -> 2 meetups; |L| = 10 x meetups
    locs = grid_locations(20)
    counts = Counter()
    seeds = 200
    for s in range(seeds):
        for m in assign(population(24, 0), locs, seed=s).meetups:
            counts[m.location.id] += 1
    p = 2 / 20
    mean, sd = seeds * p, math.sqrt(seeds * p * (1 - p))
    assert all(abs(counts[l.id] - mean) <= 3 * sd for l in locs)


def test_adoption_horizon():
    assert adoption_horizon(12, 1_000_000) == 40
    assert adoption_horizon(12, 12) == 0
    assert adoption_horizon(12, 16) == 1
    assert adoption_horizon(12, 17) == 2
    with pytest.raises(ValueError):
        adoption_horizon(2, 10)


@given(st.integers(3, 1000), st.integers(0, 10**7))
def test_adoption_horizon_matches_closed_form(start, extra):
    target = start + extra
    c = adoption_horizon(start, target)
    assert start * (4 / 3) ** c >= target * (1 - 1e-12)
    assert c == 0 or start * (4 / 3) ** (c - 1) < target


def test_integer_growth_is_slower_than_the_bound():
    # with whole newcomers the population lags the continuous 4/3 law a little
    assert growth_by_thirds(12, 1_000_000) >= adoption_horizon(12, 1_000_000)
