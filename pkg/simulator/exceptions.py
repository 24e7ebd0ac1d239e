"""
Exceptions for the QRF gravity simulator
Grouped by the module that raises them; scenario problems reuse Django's ValidationError.
"""

from django.core.exceptions import ValidationError


class SimulationError(Exception):
    """Root of every error raised by the simulator services."""


# =============================================================================
# STATE ERRORS
# =============================================================================

class StateError(SimulationError):
    pass


class AllZeroAmplitudes(StateError):
    pass


class UnknownSystem(StateError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class IndexOutOfRange(StateError, IndexError):
    pass


class RegistryMismatch(StateError):
    pass


# =============================================================================
# TRANSFORM ERRORS
# =============================================================================

class TransformError(SimulationError):
    pass


class DegenerateAxis(TransformError):
    pass


class ZeroVector(TransformError):
    pass


class SingularDecomposition(TransformError):
    pass


class NotRigidlyRelated(TransformError):
    pass


class TagMissing(TransformError):
    pass


class NonDefiniteResult(TransformError):
    pass


class NonInvertibleMap(TransformError):
    pass


# =============================================================================
# DYNAMICS ERRORS
# =============================================================================

class DynamicsError(SimulationError):
    pass


class PastSingularity(DynamicsError):
    pass


class SingularityApproach(DynamicsError):
    pass


class StepTooLarge(DynamicsError):
    pass


class RelativisticVelocity(DynamicsError):
    pass


class SuperluminalSample(DynamicsError):
    pass


class GridTooCoarse(DynamicsError):
    pass


class MassOnGrid(DynamicsError):
    pass


class NotInMassFrame(DynamicsError):
    """Masses must be definite before semi-classical evolution."""


class UnsupportedDimension(DynamicsError):
    pass


# =============================================================================
# CLOCK / VALIDITY / OUTPUT ERRORS
# =============================================================================

class ClockError(SimulationError):
    pass


class StrongField(ClockError):
    pass


class ValidityError(SimulationError):
    pass


class MissingUncertainty(ValidityError):
    pass


class ValidityFailed(ValidityError):
    """A far-frame condition failed under strict mode."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OutputError(SimulationError, OSError):
    pass


# =============================================================================
# SCENARIO ERRORS
# =============================================================================

class ScenarioParseError(ValidationError):
    """Malformed scenario text, located by line and column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message, code='parse')


class UnitError(ValidationError):
    def __init__(self, message):
        super().__init__(message, code='unit')
