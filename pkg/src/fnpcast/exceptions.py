"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller broke an input contract (shape, length, range, emptiness)."""


class NumericDomainError(ArithmeticError):
    """A computation produced or received a non-finite value."""


class TrainingDivergedError(NumericDomainError):
    """The training loss became non-finite."""

    def __init__(self, epoch, detail):
        super().__init__(f"training diverged at epoch {epoch}: {detail}")
        self.epoch = epoch


class CheckpointError(IOError):
    """A checkpoint file is truncated, corrupted, or of an unknown version."""


class DataFormatError(ValueError):
    """An input data file violates the expected schema."""
