"""Small builders shared by the validation tests and the acceptance run."""

import random

from upop.validation import MeetupRegistry


def names(n):
    return [bytes([65 + i]) for i in range(n)]


def registry(n, reputable, votes, edges, ceremony=1, meetup=0):
    """Registry over members A, B, ...; ``edges`` holds (attester, attested)
    index pairs; only members with a vote have submitted a bundle."""
    ks = names(n)
    reg = MeetupRegistry(ceremony, meetup, tuple(ks), frozenset(ks[i] for i in reputable))
    for i, v in votes.items():
        reg.votes[ks[i]] = v
        reg.attesters[ks[i]] = frozenset(ks[a] for a, b in edges if b == i and a != i)
    return reg


def oracle_view(reg):
    """Inputs for the rule-by-rule oracle, restricted to submitted bundles."""
    return list(reg.members), set(reg.reputable), dict(reg.votes), {k: set(v) for k, v in reg.attesters.items()}


def random_registry(rng: random.Random, n):
    rep = [i for i in range(n) if rng.random() < 0.8]
    honest = n
    votes = {i: rng.choice([honest] * 4 + [honest + 1, honest - 1]) for i in range(n) if rng.random() < 0.9}
    density = rng.random()
    edges = {(a, b) for a in range(n) for b in range(n) if a != b and rng.random() < density}
    return registry(n, rep, votes, edges)
