"""Stationary economy: simulated money supply against the closed-form recurrence.

    python3 scripts/equilibrium.py [--seed 1] [--out results/equilibrium]

Writes supply.csv (simulated), closed_form.csv and a one-line summary.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

from upop.cli import closed_form_curve
from upop.ledger import equilibrium_supply
from upop.sim import load_scenario, run_scenario

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "stationary.json"))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="results/equilibrium")
    args = ap.parse_args()

    cfg = replace(load_scenario(args.scenario), seed=args.seed)
    cp = cfg.currency
    start = time.perf_counter()
    report = run_scenario(cfg)
    elapsed = time.perf_counter() - start

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.supply.write_csv(out / "supply.csv")
    curve = closed_form_curve(cfg.population, cp.reward, cp.demurrage_rate_per_month, cp.meetup_interval_days, cfg.ceremonies)
    curve.write_csv(out / "closed_form.csv")

    m_star = equilibrium_supply(cfg.population, cp.reward, cp.demurrage_rate_per_month, cp.meetup_interval_days)
    print(f"{cfg.population} agents, {cfg.ceremonies} ceremonies in {elapsed:.1f} s")
    print(f"final supply {report.final_supply:.2f}, equilibrium {m_star:.2f} ({report.final_supply / m_star - 1:+.3%})")
    print(f"basic income share of supply per interval {cfg.population * cp.reward / m_star:.2%}")
    worst = max(abs(s / c[2] - 1) for (_, _, s), c in zip(report.supply.rows, curve.rows))
    print(f"largest deviation from the closed-form curve {worst:.2e}")


if __name__ == "__main__":
    main()
