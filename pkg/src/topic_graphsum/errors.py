"""Exception hierarchy shared by every subsystem."""


class TopicGraphSumError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(TopicGraphSumError, ValueError):
    """A caller violated a documented precondition."""


class ShapeError(ContractError):
    """Operand shapes are incompatible for an operation."""

    def __init__(self, op: str, shapes, detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible shapes {', '.join(str(s) for s in self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DomainError(TopicGraphSumError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class EmptyVocabularyError(ContractError):
    pass


class UnsupportedOperationError(TopicGraphSumError):
    """The requested analysis is undefined for the active model variant."""


class TrainingDivergedError(TopicGraphSumError, FloatingPointError):
    """A non-finite loss was produced during training."""


class CheckpointError(TopicGraphSumError):
    pass


class CheckpointNotFoundError(CheckpointError, FileNotFoundError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass
