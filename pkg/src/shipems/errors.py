"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Problem arrays disagree on variable or row counts."""


class NumericalBreakdown(RuntimeError):
    """Simplex pivoting degenerated beyond the iteration cap.

    Signals a modeling bug (badly scaled or malformed problem), not a
    user error.
    """


class InfeasibleWindow(RuntimeError):
    """A dispatch window came back infeasible.

    A well-formed scenario can always shed every load and idle the
    storage, so this indicates inconsistent ramp/initial data.
    """


class DecodeMismatch(RuntimeError):
    """Objective recomputed from a decoded plan disagrees with the solver."""


class ZeroDenominator(ValueError):
    """A ratio metric was requested with an identically-zero denominator."""


class ZeroNorm(ValueError):
    """A normalization constant for the tuner merit is zero or negative."""


class NonFiniteMerit(RuntimeError):
    """A tuning evaluation produced NaN/inf; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class ScenarioError(ValueError):
    """Base class for scenario-file problems."""


class ParseError(ScenarioError):
    """Scenario file could not be read or parsed at all."""


class SchemaError(ScenarioError):
    """Scenario document violates the schema; message carries the field path."""


class DimensionError(ScenarioError):
    """Demand table or per-step data has inconsistent dimensions."""


class BundleInvariantError(RuntimeError):
    """A result bundle failed trajectory invariants at write time."""
