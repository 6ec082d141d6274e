"""Exception hierarchy shared by every module and the CLI."""


class ChlError(Exception):
    """Base class for all domain errors raised by this package."""


class ArgumentError(ChlError, ValueError):
    """An argument is outside its documented range."""


class SchemaError(ChlError):
    """Band names, headers or model kinds do not match what is required."""


class DimensionError(ChlError):
    """Grids or arrays with incompatible shapes or georeferencing."""


class FormatError(ChlError):
    """A file does not follow its declared format."""


class LengthError(FormatError):
    """Payload size disagrees with the header."""


class ParseError(FormatError):
    """A header or cell could not be parsed."""


class VersionError(FormatError):
    """Unsupported format version."""


class DomainError(ChlError, ValueError):
    """Mathematical domain violation, e.g. a non-positive reflectance."""


class RankError(ChlError):
    """The normal matrix of a least-squares fit is singular."""


class StateError(ChlError):
    """The object is not in the state the operation requires."""


class DegenerateBandwidthError(ChlError):
    """A kernel bandwidth cannot be derived from constant data."""
