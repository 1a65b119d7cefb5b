"""Exception types shared across the package."""


class SchemaError(ValueError):
    """Model document is missing a field, has an unexpected one, or is empty."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SpeciesError(ValueError):
    """A reaction or expression refers to a species that was never declared."""


class UnknownSpecies(SpeciesError):
    pass


class ParseError(ValueError):
    """Output expression does not match the grammar."""

    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class ReductionError(RuntimeError):
    """Base class for failures while building a reduced model."""


class NoSecondScale(ReductionError):
    pass


class DegenerateScale(ReductionError):
    pass


class FiberNotFinite(ReductionError):
    pass


class NotErgodic(ReductionError):
    pass


class NoRepresentative(ReductionError):
    pass


class SingularSolve(ReductionError):
    pass


class StiffnessFailure(RuntimeError):
    pass


class TruncationError(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    pass
