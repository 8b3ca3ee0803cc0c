"""Adversarial suite: attack outcomes per behaviour mix over many seeds.

    python3 scripts/adversarial.py [--seeds 50] [--out results/adversarial]

Mixes that keep an honest reputable majority at every meetup should never
earn an adversary more than one reward per ceremony. The counter scenario,
where a sybil ring holds the majority, shows where that guarantee ends.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import replace
from pathlib import Path

from upop.sim import load_scenario, run_scenario

ROOT = Path(__file__).resolve().parent.parent
MIXES = ("oversigner", "noshow", "flooder", "videoconf_minority", "combined", "videoconf_counter")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--signed", action="store_true", help="sign and verify every attestation (slower)")
    ap.add_argument("--out", default="results/adversarial")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = ["attempted", "succeeded", "rewards", "excess_tokens", "excess_tokens_under_premise", "fakes_admitted"]
    with open(out / "attacks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mix", "seed", "behavior", *fields, "honest_rewards_lost", "ceremonies_outside_premise"])
        for mix in MIXES:
            base = replace(load_scenario(ROOT / "scenarios" / f"{mix}.json"), signatures=args.signed)
            totals = dict.fromkeys(fields, 0.0)
            lost = outside = 0
            for seed in range(args.seeds):
                r = run_scenario(replace(base, seed=seed))
                honest_lost = sum(c.honest_rewards_lost for c in r.ceremonies)
                broken = sum(1 for c in r.ceremonies if not c.premise_all)
                lost += honest_lost
                outside += broken
                for kind, row in r.attacks.items():
                    vals = [getattr(row, f) for f in fields]
                    w.writerow([mix, seed, kind, *vals, honest_lost, broken])
                    for f, v in zip(fields, vals):
                        totals[f] += v
            print(
                f"{mix:20s} excess {totals['excess_tokens']:8g} (under premise {totals['excess_tokens_under_premise']:g}), "
                f"successes {int(totals['succeeded'])}, honest rewards lost {lost}, ceremonies outside premise {outside}"
            )


if __name__ == "__main__":
    main()
