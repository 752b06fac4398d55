"""Exception types shared across the package."""


class CsiError(Exception):
    """Base class for every error this package raises deliberately."""


class InvalidConfig(CsiError, ValueError):
    """Session configuration violates a documented constraint."""


class IllegalTransition(CsiError):
    """Attempted session state change that is not one forward step."""


class NoAnswers(CsiError):
    """Every room abstained from submitting a final answer."""


class EmptyPopulation(CsiError):
    """Partitioning was asked to split an empty participant list."""


class NoTopology(CsiError):
    """Operation needs a multi-room relay ring but the session has one room."""


class NotActive(CsiError):
    """Command arrived while the session was not accepting it."""


class NotMember(CsiError):
    """Participant tried to act in a room they do not belong to."""


class EmptyText(CsiError, ValueError):
    """Message text was empty after whitespace trimming."""


class NoParticipants(CsiError):
    """Contribution statistics need at least one human or bot participant."""


class ServiceUnavailable(CsiError):
    """Remote completion failed and the extractive fallback produced nothing."""


class TokenCollision(CsiError):
    """Propagation probe token already appears in the scripted content."""


class CorruptLog(CsiError):
    """Event log failed validation during load or replay.

    ``seq_global`` points at the first offending record when one can be named.
    """

    def __init__(self, message: str, seq_global: int | None = None):
        super().__init__(message)
        self.seq_global = seq_global


class InvalidFrame(CsiError, ValueError):
    """Wire frame could not be decoded against the protocol schema."""
