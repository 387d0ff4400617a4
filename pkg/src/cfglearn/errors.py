"""Exception hierarchy shared by all cfglearn modules."""


class CfgLearnError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(CfgLearnError):
    """A parameter schema is malformed or a reference into it is unknown."""


class DecodeError(CfgLearnError):
    """A bit vector is not a valid one-hot encoding for the schema."""


class DimensionError(CfgLearnError):
    """Vector or matrix dimensions do not match."""


class EnumerationCapError(CfgLearnError):
    """The configuration space is too large for exhaustive enumeration."""


class DegenerateDataError(CfgLearnError):
    """Performance data carries no usable information (e.g. all infinite)."""


class DivergenceError(CfgLearnError):
    """Training produced non-finite parameters or objective."""


class ClusteringError(CfgLearnError):
    """Clustering was asked for more clusters than distinct points."""


class ArgumentError(CfgLearnError):
    """An argument violates a documented bound or combination rule."""


class DataError(CfgLearnError):
    """Required data is missing or inconsistent."""


class ParseError(CfgLearnError):
    """An input file could not be parsed."""


class ExternalError(CfgLearnError):
    """An external solver command could not be spawned."""


class PersistenceError(CfgLearnError):
    """A persisted artifact is unreadable or has an unsupported version."""


class FeasibilityError(CfgLearnError):
    """A configuration violates the constraint system it must satisfy."""
