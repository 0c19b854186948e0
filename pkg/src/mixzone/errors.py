"""Exception types and the CLI exit-code taxonomy."""


class MixzoneError(Exception):
    exit_code = 1


class FormatError(MixzoneError):
    """Malformed input file (bad header, unparseable row)."""

    exit_code = 2


class DuplicateTimestamp(FormatError):
    pass


class DomainError(MixzoneError):
    """Input parsed fine but violates a physical or mathematical precondition."""

    exit_code = 3


class UnknownSpecies(DomainError):
    pass


class ZeroMassParticle(DomainError):
    pass


class RangeError(DomainError):
    pass


class TooFewCells(DomainError):
    pass


class EmptyRegion(DomainError):
    pass


class InconsistentGrid(DomainError):
    pass


class ConfigError(MixzoneError):
    exit_code = 4


class SpecError(ConfigError):
    pass


class MissingComposition(UserWarning):
    """Labeled cells had no row in the composition input."""
