"""Regenerate the small files under data/ used by the CLI examples and tests.

    python3 scripts/make_fixtures.py [data_dir]
"""

from __future__ import annotations

import json
import sys
from datetime import date
from pathlib import Path

from upop import crypto
from upop.geo import Location, LocationSet, grid_locations, solar_noon, time_window, write_locations
from upop.meetup import MeetupMember, oversigner_vote, run_meetup
from upop.validation import Transcript

CEREMONY, MEETUP = 1, 0


def _keys(tag: str, n: int) -> list[crypto.KeyPair]:
    return [crypto.generate_keypair(crypto.derive_seed("fixture", tag, i)) for i in range(n)]


def _transcript(members: list[MeetupMember], reputable: set[bytes], locations: LocationSet) -> dict:
    loc = locations[0]
    T = solar_noon(loc, date(2020, 2, 11))
    out = run_meetup(members, T, time_window(locations, loc), ceremony=CEREMONY, meetup=MEETUP, seed="fixture")
    keys = tuple(m.key for m in members)
    subs = tuple((k, out.bundles[k]) for k in sorted(out.bundles))
    return Transcript(CEREMONY, MEETUP, keys, frozenset(reputable), subs).to_dict()


def main(data: Path) -> None:
    data.mkdir(parents=True, exist_ok=True)
    locations = grid_locations(100, (47.3769, 8.5417), 50.0)
    write_locations(locations, data / "locations.csv")

    founders = _keys("founder", 12)
    (data / "founders.txt").write_text("".join(k.public.hex() + "\n" for k in founders))
    (data / "founders_too_few.txt").write_text("".join(k.public.hex() + "\n" for k in founders[:2]))
    dup = [Location("a", 47.0, 8.0), Location("a", 47.1, 8.1)]
    write_locations(dup, data / "locations_duplicate_ids.csv")

    regs = _keys("registrant", 40)
    rows = ["key,reputable,last_meetup"]
    for i, k in enumerate(regs):
        rows.append(f"{k.public.hex()},{int(i < 30)},{i % 3 if i < 30 else ''}")
    (data / "registrants.csv").write_text("\n".join(rows) + "\n")

    # eight attendees, two of them newbies, everybody honest
    kp = _keys("honest", 8)
    members = [MeetupMember(k) for k in kp]
    honest = _transcript(members, {k.public for k in kp[:6]}, locations)
    (data / "honest_meetup.json").write_text(json.dumps(honest, indent=2) + "\n")

    # same meetup, one reputable member votes one too many and brings a ghost key
    kp = _keys("oversign", 8)
    ghost = _keys("ghost", 1)
    members = [MeetupMember(k) for k in kp[:7]]
    members.append(MeetupMember(kp[7], vote=oversigner_vote(8, 1), ghosts=tuple(ghost)))
    over = _transcript(members, {k.public for k in kp[:6]} | {kp[7].public}, locations)
    (data / "oversigner_meetup.json").write_text(json.dumps(over, indent=2) + "\n")
    (data / "oversigner_key.txt").write_text(kp[7].public.hex() + "\n")

    text = (data / "honest_meetup.json").read_text()
    (data / "truncated_meetup.json").write_text(text[: len(text) // 2])


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data")
