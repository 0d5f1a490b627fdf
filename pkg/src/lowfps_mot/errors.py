"""Exception hierarchy shared by all modules."""


class MotError(Exception):
    """Base class for every error raised by lowfps_mot."""


class DataError(MotError):
    """Input data is malformed or inconsistent. The CLI maps these to exit code 2."""


class DimensionError(DataError):
    pass


class DegenerateVectorError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line_number=None, path=None):
        self.line_number = line_number
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line_number is not None:
            where += f":{line_number}"
        super().__init__(f"{where}: {message}" if where else message)


class DuplicateEntryError(DataError):
    pass


class EmbeddingJoinError(DataError):
    pass


class IoError(DataError, OSError):
    pass


class FrameOrderError(MotError):
    pass


class UndefinedMetricError(MotError):
    pass


class EmptyFrameError(MotError):
    pass


class MissingPositiveError(MotError):
    pass


class TrainingDivergedError(MotError):
    pass
