"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class UHCMError(Exception):
    exit_code = 1


class ConfigError(UHCMError, ValueError):
    exit_code = 2


class DomainError(UHCMError, ValueError):
    """A parameter lies outside its physical range."""

    exit_code = 2


class NumericalError(UHCMError, ArithmeticError):
    exit_code = 3


class TruncationError(NumericalError):
    """The Fock cutoff needed exceeds the hard cap."""


class NumericalInconsistency(NumericalError):
    pass


class SeriesTruncationError(NumericalError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class DivergentRepresentation(NumericalError):
    pass


class InsufficientDataError(UHCMError, ValueError):
    exit_code = 4


class InsufficientChannels(InsufficientDataError):
    pass


class InsufficientMoments(InsufficientDataError):
    pass


class IncoherentRecordSet(InsufficientDataError):
    pass


class DegenerateSplitter(DomainError):
    pass


class DegenerateChannel(DomainError):
    pass
