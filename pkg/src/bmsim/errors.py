"""Exception hierarchy shared by the package."""


class BmsimError(Exception):
    """Base class for all errors raised by bmsim."""


class DimensionError(BmsimError, ValueError):
    pass


class InvalidSystem(BmsimError, ValueError):
    """A circuit matrix violates a structural requirement (SPD, PSD, rank)."""


class InvalidParams(BmsimError, ValueError):
    pass


class SingularSystem(BmsimError, ArithmeticError):
    pass


class NoFeasibleInput(BmsimError, ValueError):
    pass


class MultipleRoots(BmsimError, ValueError):
    def __init__(self, message, roots=()):
        super().__init__(message)
        self.roots = tuple(roots)


class DomainError(BmsimError, ValueError):
    """Integrating-factor evaluated outside of its domain."""


class UnknownPreset(BmsimError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown preset"


class InvalidEdge(BmsimError, ValueError):
    pass


class DisconnectedGraph(BmsimError, ValueError):
    pass


class InvalidTarget(BmsimError, ValueError):
    pass


class NonPsdResult(BmsimError, ValueError):
    pass


class NonFiniteState(BmsimError, FloatingPointError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class EventOffGrid(BmsimError, ValueError):
    pass


class ScenarioError(BmsimError, ValueError):
    """Scenario document failed to parse or validate."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaMismatch(BmsimError, ValueError):
    pass
