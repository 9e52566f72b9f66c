"""Channel instances, the real-valued lifting and received-signal synthesis.

The complex model `y~ = G~ s~ + z~` is mapped to the real model `y = G s + z`
by stacking real and imaginary parts, `s = [Re(s~); Im(s~)]`, and lifting the
matrix to `[[Re, -Im], [Im, Re]]`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, TYPE_CHECKING

import numpy as np

from InfoGeoDetect.exceptions import DimensionMismatchError, NoiseVarianceError
from InfoGeoDetect.read_and_write.channel_csv import (
    format_channel,
    format_signal,
    parse_channel,
    parse_signal,
    write_text,
)
from InfoGeoDetect.types import c128, f64

if TYPE_CHECKING:
    from InfoGeoDetect.constellation import RealAlphabet
    from InfoGeoDetect.types import Array, Seed

logger = logging.getLogger(__name__)


def lift_to_real(complex_matrix: Array[c128]) -> Array[f64]:
    """Lift a complex `(Nr, K)` matrix to the real `(2Nr, 2K)` block matrix.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.channel import lift_to_real

    print(lift_to_real(np.array([[1j]])))
    ```

    Args:
        complex_matrix: The complex channel matrix

    Returns:
        `[[Re, -Im], [Im, Re]]`

    Raises:
        DimensionMismatchError: If the input is not a matrix
    """
    m = np.asarray(complex_matrix, dtype=c128)
    if m.ndim != 2:
        raise DimensionMismatchError(f"Expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("Channel entries must be finite")
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def stack_real(v: Array[c128]) -> Array[f64]:
    """`[Re(v); Im(v)]` for a complex vector `v`."""
    c = np.asarray(v, dtype=c128).ravel()
    return np.concatenate([c.real, c.imag])


def unstack_real(s: Array[f64]) -> Array[c128]:
    """Inverse of [`stack_real`][InfoGeoDetect.channel.stack_real]."""
    r = np.asarray(s, dtype=f64).ravel()
    if r.size % 2:
        raise DimensionMismatchError(f"Stacked vector has odd length {r.size}")
    half = r.size // 2
    return r[:half] + 1j * r[half:]  # type: ignore


@dataclass(frozen=True, eq=False)
class ChannelInstance:
    """A complex channel, its real lifting and the noise level it is used at."""

    complex_matrix: Array[c128]
    """The `(Nr, K)` complex channel matrix."""

    noise_var_complex: float = 0.0
    """Complex noise variance; the real model uses half of it per dimension."""

    real_matrix: Array[f64] = field(init=False, repr=False)
    """The `(2Nr, 2K)` real lifting of `complex_matrix`."""

    def __post_init__(self) -> None:
        m = np.array(self.complex_matrix, dtype=c128, copy=True)
        real = lift_to_real(m)
        if not self.noise_var_complex >= 0:
            raise NoiseVarianceError(
                f"Noise variance must be non-negative, got {self.noise_var_complex}",
            )
        m.setflags(write=False)
        real.setflags(write=False)
        object.__setattr__(self, "complex_matrix", m)
        object.__setattr__(self, "real_matrix", real)
        object.__setattr__(self, "noise_var_complex", float(self.noise_var_complex))

    @property
    def n_rx(self) -> int:
        """Number of receive antennas `Nr`."""
        return int(self.complex_matrix.shape[0])

    @property
    def n_users(self) -> int:
        """Number of single-antenna users `K`."""
        return int(self.complex_matrix.shape[1])

    @property
    def noise_var_real(self) -> float:
        """Per real dimension noise variance, half the complex one."""
        return self.noise_var_complex / 2.0

    def with_noise_variance(self, noise_var_complex: float) -> ChannelInstance:
        """A copy of this channel operated at another noise level."""
        return replace(self, noise_var_complex=noise_var_complex)


@dataclass(frozen=True, eq=False)
class ReceivedSignal:
    """A real received vector, optionally with the symbols that produced it."""

    y_real: Array[f64]
    """The length `2Nr` real received vector."""

    true_symbols_real: Array[f64] | None = None
    """The length `2K` transmitted real symbols, when known."""

    @property
    def y_complex(self) -> Array[c128]:
        """The received vector folded back into `Nr` complex values."""
        return unstack_real(self.y_real)


def generate_iid_rayleigh(
    n_rx: int,
    n_users: int,
    seed: Seed,
    noise_var_complex: float = 0.0,
) -> ChannelInstance:
    """Draw an i.i.d. Rayleigh channel with unit variance entries.

    Entries are circular complex Gaussian with `E|g|^2 = 1`, so that
    `E ||G~||_F^2 = Nr K`.

    Args:
        n_rx: Number of receive antennas
        n_users: Number of users
        seed: Seed or generator for the draw
        noise_var_complex: Noise variance attached to the instance

    Returns:
        The channel instance
    """
    if n_rx < 1 or n_users < 1:
        raise DimensionMismatchError(
            f"Need at least one antenna and one user, got n_rx={n_rx},"
            f" n_users={n_users}",
        )
    rng = np.random.default_rng(seed)
    shape = (n_rx, n_users)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelInstance(complex_matrix=g, noise_var_complex=noise_var_complex)


def noise_var_from_snr(snr_db: float, n_users: int) -> tuple[float, float]:
    """Noise variances for `SNR = K / sigma~^2`.

    An SNR of `+inf` maps to zero noise, which only the exact oracles accept.

    Args:
        snr_db: The SNR in dB
        n_users: Number of users `K`

    Returns:
        `(sigma~^2, sigma^2)`, the complex and the per real dimension variance
    """
    if n_users < 1:
        raise DimensionMismatchError(f"Need at least one user, got {n_users}")
    if math.isinf(snr_db) and snr_db > 0:
        logger.warning("SNR of +inf requested, noise variance is zero (oracle only)")
        return 0.0, 0.0
    noise_var_complex = n_users / 10.0 ** (snr_db / 10.0)
    return noise_var_complex, noise_var_complex / 2.0


def transmit(
    channel: ChannelInstance,
    s_real: Array[f64],
    seed: Seed,
    *,
    alphabet: RealAlphabet | None = None,
) -> ReceivedSignal:
    """Pass stacked real symbols through the channel and add Gaussian noise.

    Args:
        channel: The channel instance, including its noise variance
        s_real: The length `2K` stacked real symbols
        seed: Seed or generator for the noise draw
        alphabet: When given, every symbol must be one of its points

    Returns:
        The received signal with the transmitted symbols attached

    Raises:
        DimensionMismatchError: If `s_real` does not have length `2K`
    """
    s = np.asarray(s_real, dtype=f64)
    expected = (2 * channel.n_users,)
    if s.shape != expected:
        raise DimensionMismatchError(
            f"Expected stacked symbols of shape {expected}, got {s.shape}",
        )
    if alphabet is not None:
        alphabet.index_of(s)

    y = channel.real_matrix @ s
    if channel.noise_var_real > 0:
        rng = np.random.default_rng(seed)
        y = y + np.sqrt(channel.noise_var_real) * rng.standard_normal(y.shape)
    return ReceivedSignal(y_real=y, true_symbols_real=s.copy())


def load_channel(
    path: str | Path | IO[str],
    noise_var_complex: float = 0.0,
) -> ChannelInstance:
    """Read a channel file.

    The format is described in
    [`channel_csv`][InfoGeoDetect.read_and_write.channel_csv].

    Raises:
        ChannelFileError: If the file is malformed, naming the offending line
    """
    return ChannelInstance(parse_channel(path), noise_var_complex=noise_var_complex)


def save_channel(channel: ChannelInstance, path: str | Path | IO[str]) -> None:
    """Write the complex matrix of `channel` as a channel file."""
    write_text(format_channel(channel.complex_matrix), path)


def load_received_signal(path: str | Path | IO[str]) -> ReceivedSignal:
    """Read a received-signal file into its stacked real form."""
    return ReceivedSignal(y_real=stack_real(parse_signal(path)))


def save_received_signal(signal: ReceivedSignal, path: str | Path | IO[str]) -> None:
    """Write the complex form of `signal.y_real` as a received-signal file."""
    write_text(format_signal(signal.y_complex), path)
