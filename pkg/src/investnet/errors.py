"""Exception types shared across the pipeline."""


class InvestnetError(Exception):
    """Base class for package errors."""


class DataError(InvestnetError):
    """Input data violates a documented format or invariant."""


class MalformedRecordError(DataError):
    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class DuplicateIdError(MalformedRecordError):
    pass


class OrderingError(DataError):
    pass


class CalendarError(DataError):
    pass


class ModelError(InvestnetError):
    """Training could not proceed or produced an unusable model."""


class TrainingDivergedError(ModelError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")


class InvariantError(InvestnetError):
    """An internal invariant failed at runtime."""


class ConfigError(InvestnetError):
    """Configuration file or flag values are invalid."""
