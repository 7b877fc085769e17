"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with an operation."""


class ContractError(ValueError):
    """A precondition on arguments or state was violated."""


class ConfigError(ValueError):
    """Invalid model or run configuration."""


class CodecError(ValueError):
    """Malformed or unsupported image file."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during optimization."""

    def __init__(self, step, loss):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step
        self.loss = loss
