class SynthtxError(Exception):
    pass


# Anything the Monte Carlo harness records as a failed replicate.
EstimationError = SynthtxError


class ShapeError(SynthtxError, ValueError):
    pass


class DomainError(SynthtxError, ValueError):
    pass


class DegenerateDataError(SynthtxError, ValueError):
    pass


class ConfigError(SynthtxError, ValueError):
    pass


class InputError(SynthtxError, ValueError):
    pass


class UnderdeterminedError(SynthtxError, ValueError):
    pass


class MetricError(SynthtxError, ValueError):
    pass


class DatasetError(SynthtxError, ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NumericError(SynthtxError, ArithmeticError):
    pass


class SingularityError(NumericError):
    pass


class InferenceError(NumericError):
    pass


class SolverError(NumericError):
    def __init__(self, message: str, residual: float | None = None) -> None:
        if residual is not None:
            message = f"{message} (KKT residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class FeasibilityError(SolverError):
    pass


class WorkerError(SynthtxError, RuntimeError):
    pass
