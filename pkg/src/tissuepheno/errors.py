"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` (bad input, exit
code 2 on the command line) and :class:`NumericalError` (an estimator or
geometric routine could not produce a result, exit code 3).
"""


class TissuePhenoError(Exception):
    pass


class ValidationError(TissuePhenoError, ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class UndefinedRatioError(ValidationError):
    pass


class UndefinedCorrelationError(ValidationError):
    pass


class NotAssignableError(ValidationError):
    pass


class NumericalError(TissuePhenoError, ArithmeticError):
    pass


class DegenerateGeometryError(NumericalError):
    pass


class SeparationError(NumericalError):
    pass


class CollinearityError(NumericalError):
    pass


class NoEventsError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class EstimationError(NumericalError):
    pass
