"""Exception types raised by the protocol engine.

Everything a caller can cause with bad input derives from ``ProtocolError``;
the CLI maps those to exit code 2. ``InvariantViolation`` is reserved for
internal consistency failures (exit code 1).
"""


class ProtocolError(Exception):
    """Base class for input/protocol errors."""


class InvalidLocations(ProtocolError):
    pass


class SingletonSet(ProtocolError):
    pass


class BadBootstrapSize(ProtocolError):
    pass


class DuplicateCurrency(ProtocolError):
    pass


class UnknownCurrency(ProtocolError):
    pass


class NoVotes(ProtocolError):
    pass


class RejectedByReferendum(ProtocolError):
    pass


class OutOfRange(ProtocolError):
    pass


class PhaseError(ProtocolError):
    """Operation attempted in the wrong ceremony phase."""


class TooLate(ProtocolError):
    pass


class DuplicateKey(ProtocolError):
    pass


class StaleReputation(ProtocolError):
    pass


class OutsideWitnessingWindow(ProtocolError):
    pass


class UnknownParticipant(ProtocolError):
    pass


class TooFewParticipants(ProtocolError):
    pass


class InsufficientLocations(ProtocolError):
    pass


class InsufficientBalance(ProtocolError):
    pass


class ZeroDemurrage(ProtocolError):
    pass


class MalformedInput(ProtocolError):
    """A file or document could not be parsed into the expected schema."""


class InvariantViolation(Exception):
    """An internal invariant failed; never raised for bad user input."""
