"""The eight acceptance criteria, one test each.

Each test records a single PASS/FAIL line, printed at the end of the pytest
run (``pytest tests/test_acceptance.py``).
"""

import itertools
import json
import random
import time
from datetime import datetime, timedelta, timezone
from dataclasses import replace

import pytest

from conftest import ACCEPTANCE, DATA, SCENARIOS
from helpers import oracle_view, random_registry, registry
from oracles import check_assignment, rule_by_rule
from upop.assignment import Registrant, assign, max_admissible_newbies, repeat_pair_count
from upop.cli import main
from upop.errors import InsufficientBalance
from upop.events import EventLog
from upop.geo import grid_locations, urban_capacity
from upop.ledger import Ledger, decay, equilibrium_supply
from upop.sim import load_scenario, run_scenario
from upop.validation import evaluate_meetup


def record(n, ok, title, detail):
    ACCEPTANCE[n] = f"AC{n} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(ACCEPTANCE[n])
    assert ok, ACCEPTANCE[n]


def test_ac1_stationary_equilibrium():
    cfg = replace(load_scenario(SCENARIOS / "stationary.json"), seed=1)
    assert (cfg.population, cfg.ceremonies, cfg.velocity) == (10_000, 50, 1.0)
    start = time.perf_counter()
    report = run_scenario(cfg)
    elapsed = time.perf_counter() - start
    target = equilibrium_supply(10_000, 1.0, 0.07, 41)
    err = report.final_supply / target - 1
    ok = abs(err) <= 0.01 and elapsed <= 60
    record(1, ok, "stationary economy", f"final {report.final_supply:.2f} vs M* {target:.2f} ({err:+.2%}), {elapsed:.1f} s")


def test_ac2_adoption_bound():
    cfg = replace(load_scenario(SCENARIOS / "growth.json"), seed=1)
    assert cfg.newbie_demand is None and cfg.population == 12
    report = run_scenario(cfg)
    reached = next((c.index for c in report.ceremonies if c.assigned >= 1_000_000), None)
    ok = reached is not None and reached <= 40
    modes = {c.mode for c in report.ceremonies}
    record(2, ok, "adoption from 12 founders", f"10^6 participants at ceremony {reached} (modes: {', '.join(sorted(modes))})")


def test_ac3_urban_capacity():
    c = urban_capacity(43_000, 10)
    shown = (round(c.meetups_per_km2), round(c.area_per_meetup_m2), round(c.spacing_m))
    ok = abs(shown[0] - 4300) <= 1 and abs(shown[1] - 232) <= 1 and abs(shown[2] - 15) <= 1
    record(3, ok, "urban capacity", f"{c.meetups_per_km2:.1f}/km2, {c.area_per_meetup_m2:.1f} m2, {c.spacing_m:.2f} m")


def _key(i):
    return i.to_bytes(32, "big")


def test_ac4_assignment_rules():
    locs = grid_locations(100)
    loc_ids = {l.id for l in locs}
    rng = random.Random(4)
    instances = violations = 0
    while instances < 1000:
        n = rng.randint(3, 500)
        reps = rng.randint(0, n)
        regs = [Registrant(_key(i), i < reps, rng.randrange(50) if i < reps and rng.random() < 0.8 else None) for i in range(n)]
        if reps + max_admissible_newbies(reps, n - reps) < 3:
            continue
        a = assign(regs, locs, seed=rng.randrange(2**32))
        violations += len(
            check_assignment(
                [(m.location.id, list(m.members)) for m in a.meetups],
                {r.key for r in regs if r.reputable},
                {r.key for r in regs},
                loc_ids,
            )
        )
        instances += 1

    def repeats(seed, minimize):
        prev = assign([Registrant(_key(i), True) for i in range(240)], locs, seed=f"prev:{seed}")
        last = prev.meetup_of()
        regs = [Registrant(k, True, last[k]) for k in sorted(last)]
        return repeat_pair_count(assign(regs, locs, seed=seed, minimize_repeats=minimize), prev)

    greedy = sum(repeats(s, True) for s in range(50)) / 50
    uniform = sum(repeats(s, False) for s in range(50)) / 50
    ok = violations == 0 and greedy < uniform
    record(4, ok, "assignment rules", f"{instances} instances, {violations} violations; repeat pairs {greedy:.2f} vs uniform {uniform:.2f}")


def _agrees(reg):
    mv = evaluate_meetup(reg)
    want = rule_by_rule(*oracle_view(reg))
    return (mv.m_bar, mv.m_hat, mv.nu_hat, mv.valid) == (want["m_bar"], want["m_hat"], want["nu_hat"], want["valid"])


def test_ac5_validation_oracle():
    checked = mismatches = 0
    for n in (3, 4):
        pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
        patterns = [
            (range(n), {i: n for i in range(n)}),
            (range(n - 1), {i: n for i in range(n)}),
            (range(n), {i: n + (i == 0) for i in range(n)}),
            (range(n), {i: n for i in range(n - 1)}),
        ]
        for mask in range(1 << len(pairs)):
            edges = {p for j, p in enumerate(pairs) if mask >> j & 1}
            for rep, votes in patterns:
                checked += 1
                mismatches += not _agrees(registry(n, rep, votes, edges))
    exhaustive = checked
    rng = random.Random(5)
    for n in (5, 6):
        for _ in range(3000):
            checked += 1
            mismatches += not _agrees(random_registry(rng, n))
    larger = 0
    for _ in range(600):
        larger += 1
        mismatches += not _agrees(random_registry(rng, rng.randint(7, 12)))
    checked += larger
    record(5, mismatches == 0, "validation oracle", f"{checked} registries ({exhaustive} exhaustive n<=4, {larger} with n>=7), {mismatches} mismatches")


PREMISE_MIXES = ("oversigner", "noshow", "flooder", "videoconf_minority", "combined")


def test_ac6_sybil_bound():
    seeds = 50
    excess = under_premise = bound_breaches = runs = 0
    for name in PREMISE_MIXES:
        base = replace(load_scenario(SCENARIOS / f"{name}.json"), signatures=False)
        for seed in range(seeds):
            report = run_scenario(replace(base, seed=seed))
            runs += 1
            excess += sum(r.excess_tokens for r in report.attacks.values())
            under_premise += sum(r.excess_tokens_under_premise for r in report.attacks.values())
            bound_breaches += sum(1 for c in report.ceremonies if c.premise_all and c.minted > c.present_persons)
    counter = run_scenario(replace(load_scenario(SCENARIOS / "videoconf_counter.json"), seed=0))
    row = counter.attacks["videoconf"]
    ok = excess == 0 and under_premise == 0 and bound_breaches == 0 and row.succeeded > 0 and row.excess_tokens > 0
    record(
        6,
        ok,
        "honest-majority premise",
        f"{runs} runs over {len(PREMISE_MIXES)} mixes: excess {excess:g}, bound breaches {bound_breaches}; "
        f"counter-scenario excess {row.excess_tokens:g} in {row.succeeded} successes",
    )


def test_ac7_ledger_properties():
    rng = random.Random(7)
    worst = 0.0
    for _ in range(20_000):
        x, t1, t2, d = rng.uniform(0, 1e9), rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(0, 0.99)
        once = decay(x, t1 + t2, d)
        if once:
            worst = max(worst, abs(decay(decay(x, t1, d), t2, d) / once - 1))

    t0 = datetime(2020, 1, 1, tzinfo=timezone.utc)
    log = EventLog()
    led = Ledger(b"\x07" * 32, 1.0, 0.003, 0.07, log=log)
    now = t0
    for _ in range(5000):
        now += timedelta(hours=rng.uniform(0, 30))
        a, b = bytes([rng.randrange(30)]), bytes([rng.randrange(30)])
        if rng.random() < 0.4:
            led.mint(a, now)
        else:
            try:
                led.transfer(a, b, rng.uniform(0, 3), now)
            except InsufficientBalance:
                pass
    deltas = sum(e.payload["delta"] for e in log if e.kind in ("mint", "burn", "demurrage"))
    conserved = deltas == led.total_principal() == led.minted - led.burned - led.demurrage
    burns = log.of_kind("burn")
    fee_exact = led.fee_units == 3 * 10**9 and all(e.payload["delta"] == -led.fee_units for e in burns)
    ok = worst <= 1e-12 and conserved and fee_exact and len(burns) > 1000
    record(7, ok, "ledger", f"composition max rel err {worst:.1e}; log deltas {deltas} == principal: {conserved}; {len(burns)} fees of exactly 0.003")


def test_ac8_cli_determinism(tmp_path):
    runs = {
        "run": ["run", SCENARIOS / "small_honest.json", SCENARIOS / "noshow.json"],
        "new-currency": ["new-currency", "--founders", DATA / "founders.txt", "--locations", DATA / "locations.csv"],
        "validate": ["validate", DATA / "oversigner_meetup.json"],
        "supply-curve": ["supply-curve", "--ceremonies", "60"],
    }
    compared = 0
    same = True
    cur = tmp_path / "new-currency" / "a"
    for name, argv in list(runs.items()) + [
        ("assign-dry-run", ["assign-dry-run", "--currency", cur / "currency.json", "--registrants", DATA / "registrants.csv"])
    ]:
        first, second = tmp_path / name / "a", tmp_path / name / "b"
        assert main([str(x) for x in argv] + ["--out", str(first)]) == 0
        assert main(["replay", str(first / "manifest.json"), "--out", str(second)]) == 0
        outputs = json.loads((first / "manifest.json").read_text())["outputs"]
        for f in outputs:
            compared += 1
            same &= (first / f).read_bytes() == (second / f).read_bytes()
    record(8, same, "CLI replay", f"{compared} output files over 5 subcommands byte-identical: {same}")
