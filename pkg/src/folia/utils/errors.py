"""Exception hierarchy for folia."""

from typing import Any, Optional, Sequence


class FoliaError(Exception):
    """Base class for every error raised by folia"""


class ExprParseError(FoliaError):
    """Syntax error in an expression source string"""

    def __init__(self, message: str, source: str, position: int):
        self.source = source
        self.position = position
        super().__init__(f"{message} at position {position}: {source!r}")


class UnknownIdentifierError(FoliaError):
    """Identifier is neither a chart variable nor a known function"""

    def __init__(self, name: str, position: int, allowed: Sequence[str]):
        self.name = name
        self.position = position
        super().__init__(
            f"Unknown identifier '{name}' at position {position} (chart variables: {', '.join(allowed)})"
        )


class SingularLocusError(FoliaError):
    """Evaluation point lies on the singular locus of an expression"""

    def __init__(self, expression: Any, point: Sequence[Any]):
        self.expression = expression
        self.point = tuple(point)
        super().__init__(f"Point {self.point} lies on the singular locus {expression} = 0")


class DimensionMismatchError(FoliaError):
    """Vector or point length does not match the chart dimension"""


class ChartMismatchError(FoliaError):
    """Operands live on different charts"""


class NotPolynomialError(FoliaError):
    """Exact decision requested on non-polynomial data"""


class NotSubmersionError(FoliaError):
    """Jacobian rank deficiency at a sampled point"""

    def __init__(self, map_name: str, point: Sequence[Any], rank: int, expected: int):
        self.point = tuple(point)
        self.rank = rank
        self.expected = expected
        super().__init__(f"{map_name} is not a submersion at {self.point}: rank {rank} < {expected}")


class FrameInvalidError(FoliaError):
    """Supplied kernel frame is not annihilated by the Jacobian or has the wrong rank"""


class CannotAutoComputeError(FoliaError):
    """No polynomial kernel frame could be derived from the Jacobian"""


class LeftDomainError(FoliaError):
    """Integrated trajectory left the chart box"""

    def __init__(self, step: int, point: Sequence[float]):
        self.step = step
        self.point = tuple(float(c) for c in point)
        super().__init__(f"Trajectory left the chart domain at step {step}, point {self.point}")


class StepUnderflowError(FoliaError):
    """Step size or step count outside the supported range"""


class PreconditionZ0Error(FoliaError):
    """Z_0(p) does not vanish"""


class FlowEscapeError(FoliaError):
    """Sampled flows keep leaving the domain after shrinking the ball"""


class NotMinimalError(FoliaError):
    """Generators do not form a basis of the fiber at the point"""


class FiberedMismatchError(FoliaError):
    """Triple does not lie in the fibered product"""


class OutsideValidityBallError(FoliaError):
    """Group element outside the validity ball of its model"""


class BisectionInvalidError(FoliaError):
    """Bisection fails s∘b = id or t∘b is not a local diffeomorphism"""


class NonOrthonormalBasisError(FoliaError):
    """Fiber basis deviates from orthonormality"""


class APathError(FoliaError):
    """Malformed A-path (grid, shapes, junctions)"""


class CommutationFailureError(FoliaError):
    """Diagram check found a discrepancy above tolerance"""

    def __init__(self, message: str, witness: Optional[dict] = None):
        self.witness = witness or {}
        super().__init__(message)


class InvariantMismatchError(CommutationFailureError):
    """Representative-level invariants differ between the two diagram paths"""


class ConfigError(FoliaError):
    """Job configuration could not be parsed or does not resolve"""

    def __init__(self, message: str, pointer: str = "", line: Optional[int] = None, column: Optional[int] = None):
        self.pointer = pointer
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})"
        elif pointer:
            location = f" (at {pointer})"
        super().__init__(f"{message}{location}")
