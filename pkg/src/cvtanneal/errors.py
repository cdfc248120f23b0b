"""Exception types raised across the package."""


class CVTError(ValueError):
    """Base class for all errors raised by cvtanneal."""


# geometry
class TooFewVertices(CVTError):
    pass


class Degenerate(CVTError):
    pass


class NonConvex(CVTError):
    pass


class CoincidentGenerators(CVTError):
    pass


class EmptyCell(CVTError):
    pass


class DegenerateCell(CVTError):
    pass


class PointOutsideDomain(CVTError):
    pass


# energy
class MismatchedSizes(CVTError):
    pass


class PerturbationExitsDomain(CVTError):
    pass


# optimize
class IndexOutOfSchedule(CVTError):
    pass


class InvalidSchedule(CVTError):
    pass


# laam
class EmptyInput(CVTError):
    pass


class UnsupportedDomainForTiling(CVTError):
    pass


class NoGenerators(CVTError):
    pass


class TooFewClusters(CVTError):
    pass


class ConfigError(CVTError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
