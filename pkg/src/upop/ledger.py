"""Per-currency balances with lazily applied demurrage.

Amounts are stored as integers of 1e-12 token ("units"). Decay factors are
computed in binary floating point and the result is quantized back to units,
so every balance mutation is exact integer arithmetic and supply accounting
can be checked for exact conservation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .errors import InsufficientBalance, OutOfRange, ZeroDemurrage
from .events import EventLog

UNIT = 10**12
DAYS_PER_MONTH = 30.0


def to_units(amount) -> int:
    """Quantize a token amount (float, int, str or Decimal) to integer units."""
    return int((Decimal(str(amount)) * UNIT).to_integral_value(ROUND_HALF_EVEN))


def from_units(units: int) -> float:
    return units / UNIT


def decay_factor(elapsed_days: float, d_month: float) -> float:
    if elapsed_days < 0:
        raise ValueError("elapsed time must be non-negative")
    if elapsed_days == 0 or d_month == 0:
        return 1.0
    return (1.0 - d_month) ** (elapsed_days / DAYS_PER_MONTH)


def decay(amount: float, elapsed_days: float, d_month: float) -> float:
    """Balance left after ``elapsed_days`` of demurrage at ``d_month`` per 30 days."""
    return amount * decay_factor(elapsed_days, d_month)


def equilibrium_supply(population: int, reward: float, d_month: float, interval_days: float) -> float:
    """Steady-state supply right after a ceremony's issuance.

    Solves M = M * (1 - d)^(interval/30) + population * reward.
    """
    if d_month <= 0:
        raise ZeroDemurrage("no equilibrium without demurrage")
    if d_month >= 1:
        return population * reward
    return population * reward / (1.0 - decay_factor(interval_days, d_month))


@dataclass
class Account:
    key: bytes
    principal: int
    last_touched: datetime


def _days(a: datetime, b: datetime) -> float:
    return (b - a).total_seconds() / 86400.0


class Ledger:
    """Balances of one currency.

    ``minted``, ``burned`` and ``demurrage`` accumulate the signed supply
    deltas; ``total_principal() == minted - burned - demurrage`` always holds.
    """

    def __init__(
        self,
        currency: bytes,
        reward: float,
        fee_fraction: float,
        d_month: float,
        log: EventLog | None = None,
    ):
        self.currency = currency
        self.accounts: dict[bytes, Account] = {}
        self.log = log
        self.minted = 0
        self.burned = 0
        self.demurrage = 0
        self.set_params(reward=reward, fee_fraction=fee_fraction, d_month=d_month)

    def set_params(self, *, reward: float, fee_fraction: float, d_month: float, now: datetime | None = None) -> None:
        """Change monetary parameters; with ``now`` all accounts are settled first
        so the old demurrage rate governs the elapsed time."""
        if not 0 <= d_month < 1:
            raise OutOfRange("demurrage rate must be in [0, 1)")
        if not 0 <= fee_fraction < 1:
            raise OutOfRange("fee fraction must be in [0, 1)")
        if reward <= 0:
            raise OutOfRange("reward must be positive")
        if now is not None:
            self.settle(now)
        self.reward = reward
        self.fee_fraction = fee_fraction
        self.d_month = d_month
        self.reward_units = to_units(reward)
        self.fee_units = int(
            (Decimal(str(fee_fraction)) * Decimal(str(reward)) * UNIT).to_integral_value(ROUND_HALF_EVEN)
        )

    @property
    def fee(self) -> float:
        return from_units(self.fee_units)

    def _emit(self, now: datetime, kind: str, payload: dict, ceremony: int | None = None) -> None:
        if self.log is not None:
            self.log.append(now, ceremony, self.currency, kind, payload)

    def _decayed(self, acct: Account, now: datetime) -> int:
        if acct.last_touched == now or acct.principal == 0:
            return acct.principal
        elapsed = _days(acct.last_touched, now)
        if elapsed < 0:
            raise ValueError("ledger time went backwards for account")
        if acct.principal == 0 or elapsed == 0 or self.d_month == 0:
            return acct.principal
        return int(round(acct.principal * decay_factor(elapsed, self.d_month)))

    def touch(self, key: bytes, now: datetime) -> Account:
        acct = self.accounts.get(key)
        if acct is None:
            acct = self.accounts[key] = Account(key, 0, now)
            return acct
        new = self._decayed(acct, now)
        delta = new - acct.principal
        if delta:
            self.demurrage -= delta
            self._emit(now, "demurrage", {"account": key, "delta": delta})
        acct.principal = new
        acct.last_touched = now
        return acct

    def balance_units(self, key: bytes, now: datetime) -> int:
        acct = self.accounts.get(key)
        return 0 if acct is None else self._decayed(acct, now)

    def balance(self, key: bytes, now: datetime) -> float:
        return from_units(self.balance_units(key, now))

    def mint(self, key: bytes, now: datetime, amount: float | None = None, ceremony: int | None = None) -> Account:
        units = self.reward_units if amount is None else to_units(amount)
        return self.mint_units(key, now, units, ceremony)

    def mint_units(self, key: bytes, now: datetime, units: int, ceremony: int | None = None) -> Account:
        if units < 0:
            raise ValueError("cannot mint a negative amount")
        acct = self.touch(key, now)
        acct.principal += units
        self.minted += units
        self._emit(now, "mint", {"account": key, "delta": units}, ceremony)
        return acct

    def transfer_units(self, src: bytes, dst: bytes, units: int, now: datetime) -> None:
        if units < 0:
            raise ValueError("transfer amount must be non-negative")
        # a missing sender must not be created by a failed transfer
        if self.balance_units(src, now) < units + self.fee_units:
            raise InsufficientBalance(
                f"balance {from_units(self.balance_units(src, now))} < {from_units(units + self.fee_units)}"
            )
        a = self.touch(src, now)
        b = self.touch(dst, now)
        a.principal -= units + self.fee_units
        b.principal += units
        self._emit(now, "transfer", {"from": src, "to": dst, "amount": units})
        if self.fee_units:
            self.burned += self.fee_units
            self._emit(now, "burn", {"account": src, "delta": -self.fee_units})

    def transfer(self, src: bytes, dst: bytes, amount: float, now: datetime) -> None:
        self.transfer_units(src, dst, to_units(amount), now)

    def settle(self, now: datetime) -> None:
        """Apply demurrage to every account up to ``now``."""
        for key in self.accounts:
            self.touch(key, now)

    def total_principal(self) -> int:
        return sum(a.principal for a in self.accounts.values())

    def supply_units(self, now: datetime) -> int:
        return sum(self._decayed(a, now) for a in self.accounts.values())

    def supply(self, now: datetime) -> float:
        return from_units(self.supply_units(now))

    def snapshot(self, now: datetime) -> dict[str, float]:
        return {k.hex(): self.balance(k, now) for k in sorted(self.accounts)}


class SupplySeries:
    """Money-supply time series; exported as ``t_days,currency,total_supply``."""

    def __init__(self) -> None:
        self.rows: list[tuple[float, str, float]] = []

    def record(self, t_days: float, currency: bytes | str, supply: float) -> None:
        cid = currency.hex() if isinstance(currency, bytes) else currency
        self.rows.append((t_days, cid, supply))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_days", "currency", "total_supply"])
        for t, c, s in self.rows:
            w.writerow([f"{t:.6f}", c, f"{s:.12f}"])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path: str | Path) -> "SupplySeries":
        series = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                series.record(float(row["t_days"]), row["currency"], float(row["total_supply"]))
        return series
