"""Exception hierarchy shared by all segflow modules."""


class SegflowError(Exception):
    """Base class for every error raised by segflow.

    ``kind`` is the machine-readable name reported by the CLI.
    """

    exit_code = 3

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    @property
    def kind(self):
        return type(self).__name__

    def to_dict(self):
        out = {"error": self.kind, "message": str(self)}
        out.update(self.details)
        return out


class InputError(SegflowError):
    """Malformed or invalid user input (CLI exit code 2)."""

    exit_code = 2


# data_core
class MissingColumn(InputError):
    pass


class NonNumericCell(InputError):
    pass


class NonMonotonicTime(InputError):
    pass


class DegenerateSpan(InputError):
    pass


class InvalidDemonstration(InputError):
    pass


# gmm_segmenter
class TooFewSamples(SegflowError):
    pass


class SingularComponent(SegflowError):
    pass


class AllFitsFailed(SegflowError):
    pass


class UnorderedGmm(SegflowError):
    pass


# force_detector
class NonSpdCovariance(SegflowError):
    pass


class SingularInnovationCovariance(SegflowError):
    pass


# fusion
class PointOutOfSpan(SegflowError):
    pass


# dmp_engine
class DegenerateSegment(SegflowError):
    pass


class ModelCountMismatch(SegflowError):
    pass


class SegmentTimeout(SegflowError):
    """A segment did not reach its end condition in time.

    The partial execution trace is attached as ``trace``.
    """

    def __init__(self, message, trace=None, **details):
        super().__init__(message, **details)
        self.trace = trace


# synth_oracle / config
class InvalidScript(InputError):
    pass


class InvalidConfig(InputError):
    pass
