"""Exception taxonomy for the satpose library.

Every error raised by the library derives from SatposeError so callers
can catch the whole family at one boundary (the CLI maps them to exit
codes).  Names describe the violated contract, not the call site.
"""


class SatposeError(Exception):
    """Base class for all satpose errors."""


class NotARotation(SatposeError):
    """A matrix claimed to be a rotation is not orthonormal within tolerance."""


class BehindCamera(SatposeError):
    """A point to be projected has non-positive depth in the camera frame."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"point {index} has non-positive depth in the camera frame")


class ZeroPoseError(SatposeError):
    """The zero (rejected-sample) pose was used where a valid pose is required."""


class BadDimensions(SatposeError):
    """Heatmap stride does not divide the requested grid dimensions."""


class ShapeMismatch(SatposeError):
    """Two grids that must share a shape do not."""


class DegenerateConfiguration(SatposeError):
    """Minimal-solver input admits no solution (collinear points, no real roots)."""


class NoSolution(SatposeError):
    """RANSAC found no pose candidate with enough inliers."""


class DivergedBehindCamera(SatposeError):
    """Pose refinement drove an object point to non-positive depth."""


class EmptyBatch(SatposeError):
    """The monitoring objective was asked to score an empty batch."""


class EmptyDataset(SatposeError):
    """A self-training round was started with no samples."""


class EmptyInput(SatposeError):
    """Aggregation over an empty score list."""


class ZeroGroundTruthTranslation(SatposeError):
    """Relative translation score is undefined for a zero ground-truth translation."""


class ParseError(SatposeError):
    """A file could not be parsed; carries position information when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(SatposeError):
    """A parsed file is structurally valid but violates the expected schema."""

    def __init__(self, field: str, message: str = ""):
        self.field = field
        text = f"field '{field}'"
        if message:
            text = f"{text}: {message}"
        super().__init__(text)


class NonUnitQuaternion(SatposeError):
    """A dataset quaternion is farther than the ingest tolerance from unit norm."""

    def __init__(self, record_id: str, norm: float):
        self.record_id = record_id
        self.norm = norm
        super().__init__(f"record '{record_id}': quaternion norm {norm:.6g} is not within 1e-3 of 1")


class UnknownPartLabel(SatposeError):
    """A mesh group/material name does not match any of the five part categories."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown part label '{name}'")


class NoTriangles(SatposeError):
    """A loaded mesh contains no usable (non-degenerate) triangles."""


class ConfigError(SatposeError):
    """A run configuration contains unknown keys or out-of-range values."""
