"""Exception hierarchy shared across the simulator."""


class LaccolithError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(LaccolithError):
    """A guest or campaign configuration is unusable (bad sizes, missing parts)."""


class ValidationError(LaccolithError):
    """Structured data violates one of its invariants."""


class TranslationFault(LaccolithError):
    """Guest-virtual address has no mapping."""


class BoundsError(LaccolithError):
    """Physical access outside the memory image. Never crashes the guest."""


class GuestCrashedError(LaccolithError):
    """Operation attempted on a crashed (absorbing state) guest."""


class ProfileMissingError(LaccolithError):
    """No symbol profile is available for the requested kernel build."""


class HandshakeError(LaccolithError):
    """Egg handshake failed: value absent, ambiguous, or colliding."""


class PlanningError(LaccolithError):
    """An operation plan cannot be completed (unresolved fact placeholder)."""


class UndefinedMetricError(LaccolithError):
    """Metric requested over an empty denominator."""


class ChannelClosedError(LaccolithError):
    """Agent channel is closed or was dropped mid-conversation."""


class UnknownEntityError(LaccolithError):
    """Lookup of a guest/agent/operation/profile id that does not exist."""
