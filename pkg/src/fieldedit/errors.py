"""Exception hierarchy shared by all fieldedit modules."""


class FieldEditError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def payload(self) -> dict:
        """Machine-readable form used by the CLI and the HTTP service."""
        return {"error": self.code, "message": str(self)}


class DomainViolation(FieldEditError):
    code = "domain-violation"


class NumericFailure(FieldEditError):
    code = "numeric-failure"


class SingularGradient(FieldEditError):
    """The spatial gradient vanished; normals and basis rows are undefined."""

    code = "singular-gradient"


class ShapeMismatch(FieldEditError):
    code = "shape-mismatch"


class ProjectionFailure(FieldEditError):
    code = "projection-failure"


class EmptyZeroSet(FieldEditError):
    code = "empty-zero-set"


class RegionUnreachable(FieldEditError):
    code = "region-unreachable"


class MissingWeights(FieldEditError):
    code = "missing-weights"


class MissingCurvature(FieldEditError):
    code = "missing-curvature"


class EmptyTarget(FieldEditError):
    code = "empty-target"


class SingularSystem(FieldEditError):
    code = "singular-system"


class DegenerateConstraint(FieldEditError):
    code = "degenerate-constraint"


class OptimizationFailure(FieldEditError):
    code = "optimization-failure"


class FitFailure(FieldEditError):
    code = "fit-failure"


class InvalidSpec(FieldEditError):
    """A user-supplied spec (edit, flow, rigid, family) failed validation."""

    code = "invalid-spec"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

    def payload(self) -> dict:
        out = super().payload()
        if self.field is not None:
            out["field"] = self.field
        return out
