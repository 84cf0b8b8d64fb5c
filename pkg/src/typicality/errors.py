"""Exception types raised across the package."""


class TypicalityError(Exception):
    """Base class for all package errors."""


class MalformedInputError(TypicalityError, ValueError):
    """Event lists that are unsorted or overlap."""


class TokenParseError(TypicalityError, ValueError):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"token {index}: {message}")


class CorpusLoadError(TypicalityError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class AbcParseError(TypicalityError, ValueError):
    def __init__(self, construct: str, offset: int, message: str = ""):
        self.construct = construct
        self.offset = offset
        detail = f": {message}" if message else ""
        super().__init__(f"{construct} at byte offset {offset}{detail}")


class TrainingError(TypicalityError):
    pass


class ModelLoadError(TypicalityError):
    pass


class ModelVersionError(ModelLoadError):
    pass


class ConfigError(TypicalityError, ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field {field!r}: {message}")
