"""Exception hierarchy shared by all modules."""


class MixerError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(MixerError, ValueError):
    """An argument is malformed or out of range."""


class CapacityError(MixerError, ValueError):
    """A register or simulator guard is too small for the requested work."""


class DomainError(MixerError, ValueError):
    """The operation is undefined for the given input (e.g. empty feasible set)."""


class InputError(MixerError, ValueError):
    """A problem or circuit file could not be parsed."""
