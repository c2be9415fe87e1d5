"""Exception hierarchy. CLI exit codes hang off these classes."""


class CrestfieldError(Exception):
    exit_code = 1


class SchemaError(CrestfieldError):
    """Problem file or field file does not match the expected structure."""

    exit_code = 2

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class GridMismatch(SchemaError):
    pass


class StencilError(CrestfieldError, ValueError):
    pass


class DegenerateEnergy(CrestfieldError):
    """E_1(u) = 0, so the crest factor quotient is undefined."""

    exit_code = 3


class Infeasible(CrestfieldError):
    exit_code = 4


class StalledProgress(CrestfieldError):
    """Refinement stopped reducing the deviation set. Carries the partial report."""

    exit_code = 5

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonFiniteSupremand(CrestfieldError, ArithmeticError):
    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"{message} at node {node}")
        self.node = node


class NoBracket(CrestfieldError):
    """The identity ray never reaches the requested level (coercivity fails)."""


class NotMonotone(CrestfieldError):
    """The identity ray was sampled decreasing."""


class ParseError(CrestfieldError, ValueError):
    def __init__(self, message, offset, expected=()):
        exp = ", ".join(sorted(expected))
        text = f"{message} at offset {offset}"
        if exp:
            text += f" (expected {exp})"
        super().__init__(text)
        self.offset = offset
        self.expected = frozenset(expected)
