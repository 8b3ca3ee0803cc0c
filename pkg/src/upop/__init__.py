"""Unique proof-of-personhood ceremonies, a demurrage ledger and a scenario simulator."""

__version__ = "0.1.0"
