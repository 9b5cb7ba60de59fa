"""Exception hierarchy shared by all modules."""


class TVPVECMError(Exception):
    """Base class for library errors."""


class ContractError(TVPVECMError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class SchemaError(ContractError):
    """Input file does not match the declared column schema."""


class DataError(ContractError):
    """Input data are malformed (ordering, gaps, too few rows)."""


class ValidationError(ContractError):
    """Configuration is invalid. ``problems`` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(TVPVECMError, RuntimeError):
    """A numerical routine failed (loss of positive definiteness, NaN, ...)."""

    def __init__(self, message, *, stage=None, equation=None, sweep=None, t=None):
        self.stage = stage
        self.equation = equation
        self.sweep = sweep
        self.t = t
        self.detail = message
        where = [f"{k}={v}" for k, v in
                 (("sweep", sweep), ("stage", stage), ("equation", equation), ("t", t))
                 if v is not None]
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
