from __future__ import annotations

from pathlib import Path


class UnsupportedModulationError(ValueError):
    def __init__(self, order: int, supported: tuple[int, ...]) -> None:
        super().__init__(order, supported)
        self.order = order
        self.supported = supported

    def __str__(self) -> str:
        return (
            f"Modulation order {self.order} is not supported."
            f" Supported square QAM orders are {self.supported}."
        )


class OffConstellationError(ValueError):
    """Raised when a symbol is not an exact point of the constellation."""


class DimensionMismatchError(ValueError):
    """Raised when array shapes of a model do not agree with each other."""


class NonPositiveProbabilityError(ValueError):
    """Raised when a log-ratio coordinate is requested for a zero probability."""


class NoiseVarianceError(ValueError):
    """Raised when an operation needs a strictly positive noise variance."""


class SingularSystemError(ValueError):
    """Raised when the LMMSE normal equations have no unique solution."""


class InvalidConfigError(ValueError):
    """Raised when a detector or experiment configuration is not valid."""


class OracleSizeError(ValueError):
    def __init__(self, n_components: int, alphabet_size: int, max_bits: int) -> None:
        super().__init__(n_components, alphabet_size, max_bits)
        self.n_components = n_components
        self.alphabet_size = alphabet_size
        self.max_bits = max_bits

    def __str__(self) -> str:
        return (
            f"Exact enumeration over {self.alphabet_size}^{self.n_components}"
            f" outcomes exceeds the oracle bound of 2^{self.max_bits} outcomes."
            " Reduce the number of users or the modulation order."
        )


class _LineError(ValueError):
    kind: str = "file"

    def __init__(self, path: str | Path | None, line: int, message: str) -> None:
        super().__init__(path, line, message)
        self.path = path
        self.line = line
        self.message = message

    def __str__(self) -> str:
        where = "<stream>" if self.path is None else str(self.path)
        return f"Malformed {self.kind} {where}, line {self.line}: {self.message}"


class ChannelFileError(_LineError):
    kind = "channel file"


class SignalFileError(_LineError):
    kind = "received-signal file"


class ConfigFileError(_LineError):
    kind = "config file"
