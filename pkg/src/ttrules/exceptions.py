class TTRulesError(Exception):
    """Base class for all errors raised by ttrules."""


class ConfigurationError(TTRulesError):
    pass


class InputError(TTRulesError):
    pass


class ParseError(TTRulesError):
    """Raised for malformed CSV values and rule text.

    ``line`` and ``column`` are 1-based when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where = f" ({where})"
        super().__init__(message + where)


class SchemaError(TTRulesError):
    pass


class TrainingError(TTRulesError):
    pass


class StateError(TTRulesError):
    pass


class ContractError(TTRulesError, ValueError):
    """A precondition of an operation was violated by the caller."""
