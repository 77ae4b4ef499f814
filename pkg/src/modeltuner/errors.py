"""Exception hierarchy shared by all modeltuner modules."""


class ModelTunerError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpace(ModelTunerError, ValueError):
    pass


class InvalidConfiguration(ModelTunerError, ValueError):
    pass


class GenomeOutOfDomain(ModelTunerError, ValueError):
    pass


class EvaluatorFailure(ModelTunerError):
    pass


class EmptyPopulations(ModelTunerError, ValueError):
    pass


class EmptyInput(ModelTunerError, ValueError):
    pass


class NoExamples(ModelTunerError, ValueError):
    pass


class IncompleteExample(ModelTunerError, ValueError):
    pass


class BackendUnavailable(ModelTunerError):
    pass


class MalformedResponse(ModelTunerError):
    pass


class NoModelFound(ModelTunerError):
    pass


class ScorerUnavailable(ModelTunerError):
    def __init__(self, message, attempts=0, last_error=None):
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error


class EmptySample(ModelTunerError, ValueError):
    pass


class LengthMismatch(ModelTunerError, ValueError):
    pass


class MissingCell(ModelTunerError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing cell"


class PlanInvalid(ModelTunerError, ValueError):
    pass


class StorageFailure(ModelTunerError):
    pass


class EmptyStore(ModelTunerError, ValueError):
    pass
