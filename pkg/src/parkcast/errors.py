"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ParkcastError(Exception):
    """Base class for all toolkit errors."""


class GeoJsonParseError(ParkcastError):
    """Malformed GeoJSON document. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class SchemaError(ParkcastError):
    """Input data does not match the expected schema."""


class CampusValidationError(ParkcastError):
    """One or more campus invariants are violated."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


class GeometryError(ParkcastError):
    """Geometric precondition failed (open boundary, too few gates, ...)."""


class DegenerateGateError(GeometryError):
    """Two gates project onto the same position on the boundary loop."""


class AmbiguousSectionError(ParkcastError):
    """A point is contained in more than one parking section."""

    def __init__(self, section_ids: list[int]):
        self.section_ids = sorted(section_ids)
        super().__init__(f"point contained in overlapping sections {self.section_ids}")


class UndefinedCorrelationError(ParkcastError):
    """Correlation is undefined (constant input sequence)."""


class UndefinedMetricError(ParkcastError):
    """Metric is undefined for this input (e.g. R^2 with constant truth)."""


class RankError(ParkcastError):
    """Linear system is singular and no ridge penalty was requested."""


class ConvergenceError(ParkcastError):
    """Iterative solver did not converge within its iteration budget."""

    def __init__(self, message: str, max_violation: float | None = None):
        self.max_violation = max_violation
        if max_violation is not None:
            message = f"{message} (max KKT violation {max_violation:.3e})"
        super().__init__(message)


class DivergenceError(ParkcastError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None):
        self.epoch = epoch
        super().__init__(message)


class SearchError(ParkcastError):
    """Hyperparameter search failed on every candidate."""


class GenerationError(ParkcastError):
    """Synthetic trace generation hit an impossible configuration."""


class FingerprintMismatchError(ParkcastError):
    """A stage artifact does not match its recorded fingerprint."""

    def __init__(self, name: str, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"fingerprint mismatch for {name}: expected {expected}, actual {actual}"
        )
