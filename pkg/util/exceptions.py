"""Error types raised across the package.

Data problems (bad shapes, off-simplex weights, unreachable skill paths) derive from
``DataError``; numerical failures (singular systems, diverged training) from
``NumericError``. ``run.py`` maps the two families to exit codes 3 and 4.
"""


class DseError(Exception):
    exit_code = 1


class DataError(DseError, ValueError):
    exit_code = 3


class NumericError(DseError, ArithmeticError):
    exit_code = 4


class DimensionMismatchError(DataError):
    pass


class SimplexError(DataError):
    pass


class GenerationError(DataError):
    def __init__(self, sample_index, message):
        self.sample_index = sample_index
        super(GenerationError, self).__init__("sample {}: {}".format(sample_index, message))


class SingularityError(NumericError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super(TrainingDivergedError, self).__init__(
            "training diverged at epoch {} (loss={})".format(epoch, loss))
