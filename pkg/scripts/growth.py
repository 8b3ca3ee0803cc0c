"""Adoption growth from 12 founders with unbounded newcomer demand.

    python3 scripts/growth.py [--target 1000000] [--out results/growth]
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import replace
from pathlib import Path

from upop.assignment import adoption_horizon
from upop.sim import load_scenario, run_scenario

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "growth.json"))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--target", type=int, default=1_000_000)
    ap.add_argument("--out", default="results/growth")
    args = ap.parse_args()

    cfg = replace(load_scenario(args.scenario), seed=args.seed)
    report = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "population.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ceremony", "mode", "reputables", "newbies_admitted", "participants"])
        for c in report.ceremonies:
            w.writerow([c.index, c.mode, c.reputables, c.newbies_admitted, c.assigned])

    reached = next((c.index for c in report.ceremonies if c.assigned >= args.target), None)
    bound = adoption_horizon(cfg.population, args.target)
    print(f"continuous 4/3 growth bound: {bound} ceremonies")
    print(f"simulated: {reached if reached is not None else 'not'} reached within {cfg.ceremonies} ceremonies")
    switch = next((c.index for c in report.ceremonies if c.mode == "counters"), None)
    if switch:
        print(f"individual agents until ceremony {switch - 1}, population counters afterwards")


if __name__ == "__main__":
    main()
