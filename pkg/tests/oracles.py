"""Reference implementations written independently of the package.

They favour obviousness over speed: exhaustive subset search, pairwise
scans and textbook formulas. Tests compare the package against them.
"""

from __future__ import annotations

import math
from collections import Counter
from itertools import combinations

R_KM = 6371.0


def great_circle_km(lat1, lon1, lat2, lon2) -> float:
    """Vincenty's formula specialised to a sphere (atan2 form, not haversine)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    num = math.hypot(math.cos(p2) * math.sin(dl), math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl))
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return R_KM * math.atan2(num, den)


def nearest_km(points, i) -> float:
    return min(great_circle_km(*points[i], *points[j]) for j in range(len(points)) if j != i)


def _self_supported(subset, attesters) -> bool:
    return all(any(a in subset and a != n for a in attesters.get(n, ())) for n in subset)


def greatest_supported_subset(candidates, attesters) -> frozenset:
    """Largest subset in which everybody has an attester from inside it, by
    enumerating subsets from the largest size down. Asserts it is unique."""
    cands = sorted(candidates)
    for size in range(len(cands), 0, -1):
        hits = [frozenset(s) for s in combinations(cands, size) if _self_supported(set(s), attesters)]
        if hits:
            assert len(hits) == 1, "greatest supported subset must be unique"
            return hits[0]
    return frozenset()


def strict_majority(values):
    if not values:
        return None
    ranked = Counter(values).most_common()
    top, count = ranked[0]
    return top if count * 2 > len(values) else None


def rule_by_rule(members, reputable, votes, attesters) -> dict:
    """Independent re-evaluation of the validation rules.

    ``attesters[n]`` is the set of distinct other members that attested n.
    Returns m_bar, m_hat, nu_hat and the valid set.
    """
    m_bar = greatest_supported_subset([m for m in members if m in votes], attesters)
    m_hat = greatest_supported_subset([m for m in members if m in votes and m in reputable], attesters)
    nu = strict_majority([votes[m] for m in m_hat])
    valid = set()
    if nu is not None:
        for n in m_bar:
            received = len(attesters.get(n, ()))
            given = sum(1 for other in members if n in attesters.get(other, ()))
            rule7 = votes.get(n) == nu
            rule8 = received >= len(m_hat) - 2
            rule9 = len(m_hat) - 2 <= given <= nu
            if rule7 and rule8 and rule9:
                valid.add(n)
    return {"m_bar": m_bar, "m_hat": m_hat, "nu_hat": nu, "valid": frozenset(valid)}


def check_assignment(meetups, reputable: set, registrants: set, location_ids: set) -> list[str]:
    """Hard-rule checker over plain data: ``meetups`` is a list of
    (location_id, [member keys])."""
    problems = []
    seen = set()
    locs = [loc for loc, _ in meetups]
    if len(set(locs)) != len(locs):
        problems.append("location reused")
    if not set(locs) <= location_ids:
        problems.append("unknown location")
    for loc, members in meetups:
        n = len(members)
        if n < 3 or n > 12:
            problems.append(f"size {n}")
        newbies = sum(1 for k in members if k not in reputable)
        if 4 * newbies > n:
            problems.append(f"{newbies} newbies in {n}")
        if seen & set(members):
            problems.append("member twice")
        if not set(members) <= registrants:
            problems.append("stranger seated")
        seen |= set(members)
    return problems


def repeat_pairs(current_groups, previous_groups) -> int:
    def pairs(groups):
        return {frozenset(p) for g in groups for p in combinations(g, 2)}

    return len(pairs(current_groups) & pairs(previous_groups))


def supply_recurrence(population, reward, d_month, interval_days, ceremonies, start=0.0) -> list[float]:
    f = (1 - d_month) ** (interval_days / 30)
    out, m = [], start
    for _ in range(ceremonies):
        m = m * f + population * reward
        out.append(m)
    return out


def growth_by_thirds(start: int, target: int) -> int:
    """Ceremonies until the population reaches target when each round adds
    floor(pop / 3) newcomers."""
    pop, c = start, 0
    while pop < target:
        pop += pop // 3
        c += 1
    return c
