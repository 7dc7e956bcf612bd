"""Exception hierarchy shared by every mdpc module."""


class MDPCError(Exception):
    """Base class for all errors raised by mdpc."""


class InvalidGridError(MDPCError, ValueError):
    pass


class InvalidValueError(MDPCError, ValueError):
    pass


class RateLimitError(MDPCError, ValueError):
    pass


class SmoothingError(MDPCError, ValueError):
    pass


class SafeguardError(MDPCError, ValueError):
    """The requested log-derivative bound cannot be met by any smoothing constant."""


class FormulationError(MDPCError):
    pass


class UnsupportedStructureError(MDPCError):
    pass


class NumericError(MDPCError, ArithmeticError):
    pass


class SizeError(MDPCError):
    pass


class WindowError(MDPCError, ValueError):
    pass


class SimulationError(MDPCError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class ConfigError(MDPCError, ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class IngestionError(MDPCError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
