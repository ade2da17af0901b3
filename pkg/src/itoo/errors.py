"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class ItooError(Exception):
    """Base class for all engine errors."""


class ContractViolation(ItooError, ValueError):
    """A caller broke a documented precondition."""


class SchemaError(ItooError, ValueError):
    """Data does not match a declared schema (dimension, format version, ...)."""


class ParseError(ItooError, ValueError):
    """A file could not be parsed. Carries the offending location."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f" [{path}"
            if line is not None:
                loc += f":{line}"
            loc += "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class ColdStartError(ItooError):
    """The user has no usable interaction history yet."""


class SamplingError(ItooError, ValueError):
    """Batch sampling preconditions cannot be met."""


class TrainingDiverged(ItooError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite at epoch {epoch}: {loss}")
        self.epoch = epoch
        self.loss = loss


class CycleError(ItooError, ValueError):
    """A task graph contains a cycle. Carries one offending cycle path."""

    def __init__(self, path: list[str]):
        super().__init__("cycle detected: " + " -> ".join(path))
        self.cycle = path


class UnknownEntityError(ItooError, KeyError):
    """A referenced user/item/OOTD id does not exist."""
