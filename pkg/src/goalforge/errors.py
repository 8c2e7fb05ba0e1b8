"""Exception types shared across the goalforge package."""


class GoalforgeError(Exception):
    """Base class for every error raised by this package."""


class GoalSyntaxError(GoalforgeError):
    """Lexical or grammatical error in goal text. Carries a source span."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class IllegalCharacterError(GoalSyntaxError):
    pass


class UnterminatedNumeralError(GoalSyntaxError):
    pass


class UnexpectedTokenError(GoalSyntaxError):
    pass


class GoalValidationError(GoalSyntaxError):
    """Structurally valid syntax that violates a semantic rule."""


class UnknownStateFieldError(GoalValidationError):
    def __init__(self, field: str, line: int, column: int):
        super().__init__(f"unknown state field '{field}'", line, column)
        self.field = field


class InvalidRangeError(GoalValidationError):
    pass


class DuplicateGoalNameError(GoalValidationError):
    def __init__(self, name: str, line: int, column: int):
        super().__init__(f"duplicate goal name '{name}'", line, column)
        self.name = name


class SchemaError(GoalforgeError):
    """Malformed state schema document."""


class UnsupportedOperandError(GoalforgeError):
    """Automaton construction does not support this operand shape."""


class PredicateOverlapError(GoalforgeError):
    """Outgoing edge guards of a state could not be made mutually exclusive."""


class EmptyTraceError(GoalforgeError):
    """Trace evaluation requires at least one state."""


class TemporalNodePresentError(GoalforgeError):
    """A temporal operator reached a boolean-only evaluation path."""


class NonFiniteStateError(GoalforgeError):
    """A state vector contained NaN or infinity."""


class MissingScaleError(GoalforgeError):
    def __init__(self, field: str):
        super().__init__(f"no scale entry for state field '{field}'")
        self.field = field


class DegenerateRangeError(GoalforgeError):
    def __init__(self, field: str):
        super().__init__(
            f"sampled range for field '{field}' is degenerate (max == min); "
            "declare explicit bounds in the schema"
        )
        self.field = field


class SteppedAfterTerminationError(GoalforgeError):
    """The reward engine was stepped after the episode terminated."""


class WrongOperatorError(GoalforgeError):
    """An assessment routine was called with a goal of the wrong operator."""


class EmptyBatchError(GoalforgeError):
    """Aggregation over zero episode logs."""


class CorruptCheckpointError(GoalforgeError):
    """Checkpoint file is malformed or fails its integrity checks."""


class DivergedNaNError(GoalforgeError):
    """Training produced non-finite parameters or returns."""
