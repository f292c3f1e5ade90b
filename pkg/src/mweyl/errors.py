"""Exception hierarchy.

Two broad families matter to callers: configuration/input problems
(``ConfigError``, CLI exit code 2) and numerical failures encountered
while computing (``NumericsError``, CLI exit code 3).
"""

from __future__ import annotations


class MweylError(Exception):
    """Base class for all package errors."""


class ConfigError(MweylError):
    """Invalid user input: config files, expression sources, parameters."""


class NumericsError(MweylError):
    """A numerical computation could not be completed."""


class ExpressionSyntaxError(ConfigError):
    """Source text could not be parsed.

    Carries the byte offset of the failure and the token kinds that
    would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: tuple = ()):
        self.offset = offset
        self.expected = tuple(expected)
        text = f"{message} at offset {offset}"
        if self.expected:
            text += " (expected: " + ", ".join(self.expected) + ")"
        super().__init__(text)


class UnknownIdentifierError(ExpressionSyntaxError):
    """An identifier is not one of the known function names or variables."""


class ExpressionEvalError(NumericsError):
    """Evaluation failed (division by zero, complex argument to step, ...)."""

    def __init__(self, message: str, x=None):
        self.x = x
        if x is not None:
            message = f"{message} at x={x!r}"
        super().__init__(message)


class CoefficientSingularityError(NumericsError):
    """The effective ODE coefficient blows up at a sample point."""

    def __init__(self, x: float, lam: complex):
        self.x = x
        self.lam = lam
        super().__init__(
            f"coefficient singularity near x={x!r}: u(x) is within the "
            f"singularity guard of lambda={lam!r} while w(x) does not vanish"
        )


class StepSizeUnderflowError(NumericsError):
    def __init__(self, x: float):
        self.x = x
        super().__init__(f"integration step size underflow at x={x!r}")


class QuadratureError(NumericsError):
    """Integrand evaluated to a non-finite value."""

    def __init__(self, x: float):
        self.x = x
        super().__init__(f"integrand not finite at x={x!r}")


class NearPoleError(NumericsError):
    """The boundary trace matrix is numerically singular.

    Its determinant vanishes exactly at eigenvalues of the restricted
    operator, so this error usually means lambda sits (too close to) an
    eigenvalue. The determinant value is attached for diagnostics.
    """

    def __init__(self, lam: complex, determinant: complex, cond: float):
        self.lam = lam
        self.determinant = determinant
        self.cond = cond
        super().__init__(
            f"trace matrix ill-conditioned at lambda={lam!r} "
            f"(det={determinant!r}, cond={cond:.3e}); "
            "lambda is likely at or near an eigenvalue"
        )


class EmbeddedEigenvalueError(NumericsError):
    """A limit scan ran into a pole inside the essential spectrum."""

    def __init__(self, k: float, eps: float, cause: NearPoleError):
        self.k = k
        self.eps = eps
        self.cause = cause
        super().__init__(
            f"near-pole condition at k={k!r}, eps={eps!r}: possible eigenvalue "
            "embedded in the essential spectrum"
        )


class ContourError(NumericsError):
    """Contour integration failed (sampler failure or non-convergence)."""


class SpectrumCollisionError(NumericsError):
    """A search region or contour touches the essential spectrum."""


class RootSearchError(NumericsError):
    """Root finding failed (no root, several roots, vanishing derivative...)."""


class GapConditionError(NumericsError):
    """w does not vanish on a neighbourhood of the level set u = k."""


class SubdivisionError(NumericsError):
    """Recursive region subdivision exhausted its depth budget."""
