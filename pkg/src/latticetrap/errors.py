"""Exception types raised across the package."""


class LatticeTrapError(Exception):
    """Base class for domain failures (mapped to CLI exit code 1)."""


class LayoutError(LatticeTrapError):
    """Malformed layout data or an unknown electrode id."""


class LayoutParseError(LayoutError):
    def __init__(self, message, *, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class LatticeOverlapError(LayoutError):
    pass


class SiteCountError(LayoutError):
    pass


class PlaneEvaluationError(LatticeTrapError):
    """Potential requested on (or below) an electrode plane."""


class DomainError(LatticeTrapError):
    """Point outside the region where a field evaluator is defined."""


class GridTooCoarseError(LatticeTrapError):
    pass


class SolverConvergenceError(LatticeTrapError):
    pass


class NilSearchError(LatticeTrapError):
    pass


class MissingSiteError(LatticeTrapError):
    def __init__(self, message, failed_holes=()):
        self.failed_holes = tuple(failed_holes)
        super().__init__(message)


class TrapDepthError(LatticeTrapError):
    pass


class AdjacencyError(LatticeTrapError):
    pass


class ShuttleSearchError(LatticeTrapError):
    pass
