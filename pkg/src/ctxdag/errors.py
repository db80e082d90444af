"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An operation received input that violates its contract."""


class TrainingDivergedError(RuntimeError):
    """A loss term became non-finite during training.

    Carries the epoch and the name of the offending term so callers can
    report where optimization blew up.
    """

    def __init__(self, epoch: int, term: str):
        self.epoch = epoch
        self.term = term
        super().__init__(
            f"training diverged at epoch {epoch}: term '{term}' is non-finite"
        )


class DatasetParseError(ValueError):
    """A dataset or network file is malformed; the message names the location."""
