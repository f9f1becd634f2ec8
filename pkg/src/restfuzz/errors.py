"""Exception types shared across the fuzzer."""


class RestFuzzError(Exception):
    """Base class for all errors raised by this package."""


class SpecError(RestFuzzError):
    """Base class for OpenAPI ingestion errors."""


class MalformedDocument(SpecError):
    pass


class UnresolvableRef(SpecError):
    pass


class MissingPaths(SpecError):
    pass


class UnknownOperation(RestFuzzError):
    pass


class UnknownMethod(RestFuzzError):
    pass


class UnsatisfiablePattern(RestFuzzError):
    pass


class MalformedCorpusFile(RestFuzzError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class AgentUnreachable(RestFuzzError):
    pass


class ProtocolError(RestFuzzError):
    pass


class TotalBitsChanged(RestFuzzError):
    pass


class UnknownSchedule(RestFuzzError):
    pass


class EmptyCorpus(RestFuzzError):
    pass


class ConfigError(RestFuzzError):
    pass


class PortInUse(RestFuzzError):
    pass
