"""Exception types shared across the package."""


class SplineDomainError(ValueError):
    """Input lies outside the domain an operation is defined on."""


class SplineIndexError(IndexError):
    """Index refers to a knot or coefficient that is not stored."""


class ArgumentError(ValueError):
    """Structurally invalid argument (shape, range, or configuration)."""


class UnsupportedOrderError(ValueError):
    """Operation requested for a spline order it does not support."""


class InversionError(RuntimeError):
    """Root finding failed to locate a preimage inside the bin.

    Carries the bin index and the target value so callers can report
    which coordinate failed.
    """

    def __init__(self, bin_index: int, target: float, message: str = ""):
        self.bin_index = bin_index
        self.target = target
        text = f"no root in bin {bin_index} for target {target!r}"
        if message:
            text += f": {message}"
        super().__init__(text)


class NumericDomainError(ArithmeticError):
    """A recorded primitive was evaluated outside its numeric domain."""

    def __init__(self, op: str, message: str = ""):
        self.op = op
        super().__init__(f"{op}: {message}" if message else op)


class SmoothnessError(ValueError):
    """The transform is not smooth enough for the requested derivative."""


class SingularPointError(ValueError):
    """Evaluation at a point where the target quantity is singular."""


class ConfigError(ValueError):
    """Malformed configuration file; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class TrainingError(RuntimeError):
    """Training aborted; carries epoch, batch and parameter norm."""

    def __init__(self, message: str, epoch: int, batch: int, param_norm: float):
        self.epoch = epoch
        self.batch = batch
        self.param_norm = param_norm
        super().__init__(
            f"{message} (epoch {epoch}, batch {batch}, parameter norm {param_norm:.6g})"
        )
