"""Command line front end.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out``.
The manifest holds the normalized arguments (with the seed resolved),
SHA-256 digests of inputs and outputs and library versions, and nothing
time-dependent, so ``upop replay manifest.json --out other/`` reproduces
byte-identical files.

Exit codes: 0 ok, 1 internal invariant violation, 2 input or protocol error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import date
from importlib import metadata
from pathlib import Path

from . import __version__
from .assignment import Registrant, assign, rule_report
from .errors import InvariantViolation, MalformedInput, ProtocolError
from .geo import TimingParams, load_locations, write_locations
from .ledger import SupplySeries, decay_factor, equilibrium_supply
from .registry import DEFAULT_GENESIS, Registry, currency_document, load_currency_document
from .sim import ScenarioConfig, load_scenario, run_scenario
from .validation import Transcript, evaluate_meetup, registry_from_transcript

MANIFEST = "manifest.json"
EXIT_OK, EXIT_INVARIANT, EXIT_INPUT = 0, 1, 2


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"upop": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "cryptography"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class _Outputs:
    """Collects files written into the output directory for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content)
        self.files.append(name)
        return path

    def added(self, name: str) -> None:
        self.files.append(name)

    def manifest(self, command: str, argv: list[str], seed: int | None, inputs: list[str]) -> None:
        doc = {
            "command": command,
            "argv": argv,
            "seed": seed,
            "inputs": {p: _sha256(Path(p)) for p in inputs},
            "outputs": {n: _sha256(self.out / n) for n in sorted(self.files)},
            "versions": _versions(),
        }
        (self.out / MANIFEST).write_text(_dump(doc))


def _entropy_seed() -> int:
    return random.SystemRandom().randrange(2**63)


# -- new-currency -----------------------------------------------------------


def _read_founders(path: str) -> list[bytes]:
    keys = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            key = bytes.fromhex(line)
        except ValueError:
            raise MalformedInput(f"{path}:{n}: not a hex key") from None
        if len(key) != 32:
            raise MalformedInput(f"{path}:{n}: expected a 32-byte public key")
        keys.append(key)
    return keys


def cmd_new_currency(args):
    founders = _read_founders(args.founders)
    locations = load_locations(args.locations)
    timing = TimingParams(v_max_kmh=args.v_max, meetup_interval_days=args.interval)
    cfg = Registry().bootstrap_currency(
        founders,
        locations,
        reward=args.reward,
        demurrage_rate_per_month=args.demurrage,
        fee_fraction_of_reward=args.fee,
        timing=timing,
        genesis_date=date.fromisoformat(args.genesis),
    )
    out = _Outputs(Path(args.out))
    write_locations(locations, out.out / "locations.csv")
    out.added("locations.csv")
    out.text("currency.json", _dump(currency_document(cfg, "locations.csv")))
    print(f"currency {cfg.id.hex()} with {len(founders)} founders and {len(locations)} locations")
    argv = [
        "new-currency",
        "--founders", args.founders,
        "--locations", args.locations,
        "--reward", repr(args.reward),
        "--demurrage", repr(args.demurrage),
        "--fee", repr(args.fee),
        "--interval", str(args.interval),
        "--v-max", repr(args.v_max),
        "--genesis", args.genesis,
    ]  # fmt: skip
    return out, argv, [args.founders, args.locations], None


# -- run --------------------------------------------------------------------


def _run_one(path: str, seed: int) -> dict[str, str]:
    cfg = load_scenario(path)
    if cfg.seed is None:
        cfg = ScenarioConfig.from_dict(dict(cfg.to_dict(), seed=seed))
    report = run_scenario(cfg)
    rows = ["index,t_days,mode,reputables,newbies_admitted,assigned,meetups,minted,supply,present_persons,premise_all"]
    for c in report.ceremonies:
        rows.append(
            f"{c.index},{c.t_days:.6f},{c.mode},{c.reputables},{c.newbies_admitted},{c.assigned},"
            f"{c.meetups},{c.minted},{c.supply:.12f},{c.present_persons},{int(c.premise_all)}"
        )
    return {
        "supply.csv": report.supply.to_csv(),
        "attacks.csv": report.attack_csv(),
        "ceremonies.csv": "\n".join(rows) + "\n",
        "summary.json": _dump(dict(report.summary(), config=cfg.to_dict())),
    }


def cmd_run(args):
    seed = args.seed if args.seed is not None else _entropy_seed()
    scenarios = list(args.scenarios)
    for s in scenarios:
        load_scenario(s)  # fail fast on config errors before any work
    if args.jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, scenarios, [seed] * len(scenarios)))
    else:
        results = [_run_one(s, seed) for s in scenarios]
    out = _Outputs(Path(args.out))
    single = len(scenarios) == 1
    for path, files in zip(scenarios, results):
        prefix = "" if single else Path(path).stem + "/"
        for name, content in files.items():
            out.text(prefix + name, content)
        last = files["supply.csv"].strip().splitlines()[-1].split(",")
        print(f"{path}: {len(files['ceremonies.csv'].splitlines()) - 1} ceremonies, final supply {float(last[2]):.6f}")
    argv = ["run", *scenarios, "--seed", str(seed)]
    return out, argv, scenarios, seed


# -- assign-dry-run ---------------------------------------------------------


def _read_registrants(path: str) -> list[Registrant]:
    regs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"key", "reputable"} <= set(reader.fieldnames):
            raise MalformedInput(f"{path}: expected columns key,reputable[,last_meetup]")
        for row in reader:
            try:
                last = row.get("last_meetup") or None
                regs.append(
                    Registrant(
                        bytes.fromhex(row["key"]),
                        row["reputable"].strip().lower() in ("1", "true", "yes"),
                        int(last) if last is not None else None,
                    )
                )
            except (TypeError, ValueError) as exc:
                raise MalformedInput(f"{path}: {exc}") from exc
    return regs


def cmd_assign_dry_run(args):
    cfg = load_currency_document(args.currency)
    regs = _read_registrants(args.registrants)
    seed = args.seed if args.seed is not None else _entropy_seed()
    a = assign(regs, cfg.locations, f"{seed}:{args.ceremony}", args.ceremony)
    report = rule_report(a, regs, cfg.locations)
    out = _Outputs(Path(args.out))
    out.text("assignment.json", _dump(a.to_dict()))
    out.text("rules.json", _dump(report))
    print(
        f"{report['assigned']} assigned to {report['meetups']} meetups, {report['excluded']} excluded, "
        f"{report['repeat_pairs']} repeat pairs, {len(report['violations'])} violations"
    )
    if report["violations"]:
        raise InvariantViolation("; ".join(report["violations"]))
    argv = [
        "assign-dry-run",
        "--currency", args.currency,
        "--registrants", args.registrants,
        "--ceremony", str(args.ceremony),
        "--seed", str(seed),
    ]  # fmt: skip
    return out, argv, [args.currency, args.registrants], seed


# -- validate ---------------------------------------------------------------


def cmd_validate(args):
    try:
        doc = json.loads(Path(args.transcript).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{args.transcript}: {exc}") from exc
    t = Transcript.from_dict(doc)
    reg, strangers = registry_from_transcript(t, verify_signatures=not args.no_verify)
    mv = evaluate_meetup(reg)
    records = []
    for key in t.members:
        v = mv.verdicts[key]
        records.append(v.to_dict())
        status = "valid" if v.valid else "invalid " + ",".join(v.reasons)
        print(f"{key.hex()[:16]}  vote={v.vote}  received={v.received}  attested={v.attested}  {status}")
    for key in strangers:
        print(f"{key.hex()[:16]}  rejected: not assigned to this meetup")
    print(f"nu_hat={mv.nu_hat}  valid {len(mv.valid)}/{len(t.members)}")
    out = _Outputs(Path(args.out))
    out.text(
        "verdicts.json",
        _dump(
            {
                "ceremony": t.ceremony,
                "meetup": t.meetup,
                "nu_hat": mv.nu_hat,
                "m_bar": sorted(k.hex() for k in mv.m_bar),
                "m_hat": sorted(k.hex() for k in mv.m_hat),
                "verdicts": records,
                "rejected_submitters": [k.hex() for k in strangers],
            }
        ),
    )
    argv = ["validate", args.transcript] + (["--no-verify"] if args.no_verify else [])
    return out, argv, [args.transcript], None


# -- supply-curve -----------------------------------------------------------


def closed_form_curve(population: int, reward: float, d_month: float, interval: int, ceremonies: int) -> SupplySeries:
    """M_{k+1} = M_k (1-d)^(interval/30) + population * reward, starting from zero."""
    series = SupplySeries()
    f = decay_factor(interval, d_month)
    m = 0.0
    for k in range(1, ceremonies + 1):
        m = m * f + population * reward
        series.record(k * interval, "closed-form", m)
    return series


def cmd_supply_curve(args):
    out = _Outputs(Path(args.out))
    curve = closed_form_curve(args.population, args.reward, args.demurrage, args.interval, args.ceremonies)
    out.text("closed_form.csv", curve.to_csv())
    m_star = equilibrium_supply(args.population, args.reward, args.demurrage, args.interval)
    inputs = []
    sim = None
    if args.input:
        sim = SupplySeries.read_csv(args.input)
        inputs.append(args.input)
    print(f"equilibrium supply {m_star:.6f}; closed form after {args.ceremonies} ceremonies {curve.rows[-1][2]:.6f}")
    if args.plot:
        _plot(out, curve, sim, m_star)
    argv = [
        "supply-curve",
        "--population", str(args.population),
        "--reward", repr(args.reward),
        "--demurrage", repr(args.demurrage),
        "--interval", str(args.interval),
        "--ceremonies", str(args.ceremonies),
    ]  # fmt: skip
    if args.input:
        argv += ["--input", args.input]
    if args.plot:
        argv.append("--plot")
    return out, argv, inputs, None


def _plot(out: _Outputs, curve: SupplySeries, sim: SupplySeries | None, m_star: float) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ProtocolError("--plot needs matplotlib (pip install matplotlib)") from None
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r[0] for r in curve.rows], [r[2] for r in curve.rows], label="closed form")
    if sim is not None:
        ax.plot([r[0] for r in sim.rows], [r[2] for r in sim.rows], ".", label="simulated")
    ax.axhline(m_star, color="grey", ls="--", lw=0.8, label="equilibrium")
    ax.set_xlabel("days")
    ax.set_ylabel("total supply [tokens]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out.out / "supply.png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    out.added("supply.png")


# -- replay -----------------------------------------------------------------


def cmd_replay(args) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    for path, digest in doc["inputs"].items():
        if not Path(path).exists() or _sha256(Path(path)) != digest:
            raise MalformedInput(f"input {path} is missing or changed since the manifest was written")
    return main(doc["argv"] + ["--out", args.out])


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="upop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: ./out)")

    s = sub.add_parser("new-currency", parents=[common], help="bootstrap a currency document")
    s.add_argument("--founders", required=True, help="text file, one hex public key per line")
    s.add_argument("--locations", required=True, help="CSV with columns id,lat,lon")
    s.add_argument("--reward", type=float, default=1.0)
    s.add_argument("--demurrage", type=float, default=0.07, help="demurrage rate per 30 days")
    s.add_argument("--fee", type=float, default=0.0, help="transfer fee as a fraction of the reward")
    s.add_argument("--interval", type=int, default=41, help="days between ceremonies")
    s.add_argument("--v-max", type=float, default=300.0, help="maximum travel speed in km/h")
    s.add_argument("--genesis", default=DEFAULT_GENESIS.isoformat(), help="date of ceremony 0")
    s.set_defaults(func=cmd_new_currency)

    s = sub.add_parser("run", parents=[common], help="run scenario files")
    s.add_argument("scenarios", nargs="+", help="scenario JSON files")
    s.add_argument("--seed", type=int, help="seed for scenarios that do not fix one (default: entropy)")
    s.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("assign-dry-run", parents=[common], help="assign registrants without running a ceremony")
    s.add_argument("--currency", required=True, help="currency JSON document")
    s.add_argument("--registrants", required=True, help="CSV with columns key,reputable[,last_meetup]")
    s.add_argument("--ceremony", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_assign_dry_run)

    s = sub.add_parser("validate", parents=[common], help="validate a meetup transcript")
    s.add_argument("transcript")
    s.add_argument("--no-verify", action="store_true", help="skip signature checks")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("supply-curve", parents=[common], help="closed-form supply curve, optionally with a plot")
    s.add_argument("--population", type=int, default=10_000)
    s.add_argument("--reward", type=float, default=1.0)
    s.add_argument("--demurrage", type=float, default=0.07)
    s.add_argument("--interval", type=int, default=41)
    s.add_argument("--ceremonies", type=int, default=50)
    s.add_argument("--input", help="simulated supply CSV to overlay")
    s.add_argument("--plot", action="store_true", help="also write supply.png (needs matplotlib)")
    s.set_defaults(func=cmd_supply_curve)

    s = sub.add_parser("replay", help="re-run the invocation recorded in a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        try:
            return cmd_replay(args)
        except (ProtocolError, ValueError, OSError, KeyError) as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_INPUT
    try:
        out, recorded, inputs, seed = args.func(args)
        out.manifest(args.command, recorded, seed, inputs)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ProtocolError, ValueError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
