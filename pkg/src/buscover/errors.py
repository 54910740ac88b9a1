"""Exception types shared across the toolkit."""


class BuscoverError(Exception):
    """Base class for all toolkit-specific errors."""


class ScenarioFormatError(BuscoverError):
    """A scenario or series file does not conform to the expected schema."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class IntegrityError(BuscoverError):
    """Cross-references in a scenario do not resolve (dangling ids, bad adjacency)."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = tuple(offenders)


class GridError(BuscoverError):
    """The active period cannot be tiled by half-period intervals."""

    def __init__(self, message, suggested_refresh=None):
        super().__init__(message)
        self.suggested_refresh = suggested_refresh


class RouteGenerationError(BuscoverError):
    """A random route of the requested length could not be produced."""

    def __init__(self, message, route_index):
        super().__init__(message)
        self.route_index = route_index


class NoActivePeriodError(BuscoverError):
    """No sample in a parking-change series clears the activity threshold."""


class InfeasibleError(BuscoverError):
    """The covering requirement cannot be met.

    ``pairs`` lists the uncoverable (street_id, interval_index) pairs when the
    failure comes from instance assembly; it is empty for other sources.
    """

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = tuple(pairs)


class DegenerateGramError(BuscoverError):
    """Every column of the instance has zero norm; no similarity structure exists."""


class EigenSolverError(BuscoverError):
    """The iterative eigensolver failed to converge."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations
