"""Exception hierarchy shared by all tuner modules."""


class TuneError(Exception):
    """Base class for every error raised by hlftune."""


class ValueOutOfBounds(TuneError):
    pass


class UnknownParameter(TuneError):
    pass


class DimensionMismatch(TuneError):
    pass


class UnresolvedPlaceholder(TuneError):
    pass


class DuplicatePlaceholder(TuneError):
    pass


class ParseError(TuneError):
    pass


class SchemaInvalid(TuneError):
    def __init__(self, param, reason):
        super().__init__(f"{param}: {reason}")
        self.param = param
        self.reason = reason


class SingularKernel(TuneError):
    pass


class ModelUnavailable(TuneError):
    pass


class NoIncumbent(TuneError):
    pass


class TooFewObservations(TuneError):
    pass


class MalformedReport(TuneError):
    def __init__(self, field, detail=""):
        super().__init__(f"malformed report field {field!r}" + (f": {detail}" if detail else ""))
        self.field = field


class ReferenceFailed(TuneError):
    pass


class ReplayMismatch(TuneError):
    pass


class NoValidObservations(TuneError):
    pass


class DuplicateMethod(TuneError):
    pass
