"""Exception types raised across the citymesher pipeline."""


class CityMesherError(Exception):
    """Base class for all citymesher errors."""


class DegeneratePolygon(CityMesherError):
    """Polygon has fewer than 3 usable vertices, near-zero area, or self-intersects."""


class DegenerateHull(CityMesherError):
    """Convex hull input has fewer than 3 non-collinear points."""


class NumericalFailure(CityMesherError):
    """A geometric operation could not produce a usable result."""


class BadMagic(CityMesherError):
    """File does not start with the expected LAS signature."""


class UnsupportedPointFormat(CityMesherError):
    """LAS point data record format outside the supported 0-3 range."""


class TruncatedFile(CityMesherError):
    """LAS payload is shorter than the header-declared record count requires."""


class EmptyCloud(CityMesherError):
    """An operation that needs points received none."""


class ConstraintIntersection(CityMesherError):
    """Two constraint segments properly cross; the input city model is invalid."""


class NonManifold(CityMesherError):
    """Extracted surface has an edge not shared by exactly two triangles."""


class DegenerateCell(CityMesherError):
    """Tetrahedron volume below the volume tolerance during assembly."""


class NoConvergence(CityMesherError):
    """Iterative solver failed to reach tolerance within the iteration budget."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class InvertedCells(CityMesherError):
    """Mesh smoothing produced tetrahedra with non-positive signed volume."""

    def __init__(self, message, count=0, min_volume=None):
        super().__init__(message)
        self.count = count
        self.min_volume = min_volume


class MalformedJson(CityMesherError):
    """Input file is not parseable JSON."""


class SchemaViolation(CityMesherError):
    """JSON parsed but does not match the expected city model schema."""


class StepError(CityMesherError):
    """Pipeline step failure with the failing step attached.

    Wraps the underlying exception so the CLI can report which pipeline
    step broke without losing the original diagnostic.
    """

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause
