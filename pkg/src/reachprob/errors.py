"""Exception types raised across the package."""


class ReachError(Exception):
    """Base class for package errors."""


class FormatError(ReachError, ValueError):
    """A value-field file or manifest is malformed."""


class ContractError(ReachError, ValueError):
    """A user-supplied function broke its stated contract."""


class CapabilityError(ReachError, TypeError):
    """A kernel lacks the capability an operation needs (e.g. finite support)."""


class ConfigError(ReachError, ValueError):
    """A configuration document is invalid."""
