"""Normalized square QAM constellations and their per-dimension real alphabets.

Every supported constellation is the Cartesian square of a Gray labelled PAM
alphabet. The alphabet points are kept in ascending order, so index `0` is the
most negative point and serves as the reference class of all log-ratio
coordinates elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, ClassVar

import numpy as np

from InfoGeoDetect.exceptions import (
    DimensionMismatchError,
    OffConstellationError,
    UnsupportedModulationError,
)
from InfoGeoDetect.functional import nearest_index
from InfoGeoDetect.types import c128, f64, i64, u8

if TYPE_CHECKING:
    from collections.abc import Sequence

    from InfoGeoDetect.types import Array

SUPPORTED_ORDERS = (4, 16, 64)
"""Square QAM orders accepted by
[`make_qam`][InfoGeoDetect.constellation.make_qam]."""

ATOL = 1e-9
"""Absolute tolerance when matching received values to alphabet points."""


def gray_code(n: Array[i64]) -> Array[i64]:
    """Binary reflected Gray code of each integer in `n`."""
    return n ^ (n >> 1)  # type: ignore


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RealAlphabet:
    """The `L` real points shared by every real component of the lifted model.

    !!! note

        `points` is strictly increasing. `labels[i]` is the Gray bit label of
        `points[i]`, so neighbouring points differ in exactly one bit.
    """

    points: Array[f64]
    """Alphabet points, ascending."""

    labels: Array[i64]
    """Bit label of every point, a permutation of `range(L)`."""

    _label_to_index: Array[i64] = field(init=False, repr=False)
    _popcount: Array[i64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=f64)
        labels = np.asarray(self.labels, dtype=i64)
        if points.ndim != 1 or points.size < 2:
            raise ValueError(f"An alphabet needs at least two points, got {points}")
        if not np.all(np.diff(points) > 0):
            raise ValueError(
                f"Alphabet points must be strictly increasing, got {points}",
            )
        if labels.shape != points.shape or set(labels.tolist()) != set(
            range(points.size),
        ):
            raise ValueError(
                f"Labels must be a permutation of range({points.size}), got {labels}",
            )
        if points.size & (points.size - 1):
            raise ValueError(f"Alphabet size must be a power of two, got {points.size}")

        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "_label_to_index", _readonly(np.argsort(labels)))
        popcount = np.array([bin(i).count("1") for i in range(points.size)], dtype=i64)
        object.__setattr__(self, "_popcount", _readonly(popcount))

    @property
    def size(self) -> int:
        """The number of points `L`."""
        return int(self.points.size)

    @property
    def bits_per_dimension(self) -> int:
        """Bits carried by one real component, `log2(L)`."""
        return int(self.size).bit_length() - 1

    @property
    def span(self) -> float:
        """Distance between the largest and the smallest point."""
        return float(self.points[-1] - self.points[0])

    @property
    def max_abs(self) -> float:
        """The largest magnitude of any point."""
        return float(np.max(np.abs(self.points)))

    def index_of(self, values: Array[f64] | Sequence[float]) -> Array[i64]:
        """Map exact alphabet values to their indices.

        Args:
            values: Values that must each equal some alphabet point

        Returns:
            The alphabet indices, same shape as `values`

        Raises:
            OffConstellationError: If any value is not an alphabet point
        """
        x = np.asarray(values, dtype=f64)
        idx = nearest_index(x, self.points)
        off = np.abs(x - self.points[idx]) > ATOL
        if np.any(off):
            bad = x[off].ravel()[0]
            raise OffConstellationError(
                f"Value {bad!r} is not a point of the alphabet {self.points.tolist()}",
            )
        return idx

    def index_from_label(self, labels: Array[i64]) -> Array[i64]:
        """Inverse of `labels`, mapping bit labels back to alphabet indices."""
        return self._label_to_index[labels]  # type: ignore

    def uniform_probabilities(self, n_components: int) -> Array[f64]:
        """A `(n_components, L)` array of uniform prior probabilities."""
        return np.full((n_components, self.size), 1.0 / self.size, dtype=f64)

    def bit_errors(self, detected: Array[i64], truth: Array[i64]) -> int:
        """Count label bits that differ between two arrays of alphabet indices."""
        diff = self.labels[np.asarray(detected)] ^ self.labels[np.asarray(truth)]
        return int(np.sum(self._popcount[diff]))


@dataclass(frozen=True, eq=False)
class ComplexConstellation:
    """A unit average power square QAM constellation."""

    ORDERS: ClassVar[tuple[int, ...]] = SUPPORTED_ORDERS

    order: int
    """The number of complex points `L~`."""

    points: Array[c128]
    """Complex points; point `i * L + j` is `alphabet[i] + 1j * alphabet[j]`."""

    alphabet: RealAlphabet
    """The per-dimension alphabet whose Cartesian square gives `points`."""

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=c128)
        if points.shape != (self.order,):
            raise DimensionMismatchError(
                f"Expected {self.order} points, got shape {points.shape}",
            )
        if self.alphabet.size**2 != self.order:
            raise DimensionMismatchError(
                f"Alphabet of size {self.alphabet.size} cannot span {self.order}"
                " complex points",
            )
        object.__setattr__(self, "points", _readonly(points))

    @property
    def bits_per_symbol(self) -> int:
        """Bits carried by one complex symbol, `log2(L~)`."""
        return 2 * self.alphabet.bits_per_dimension

    @property
    def average_power(self) -> float:
        """Mean squared magnitude of the points under uniform weights."""
        return float(np.mean(np.abs(self.points) ** 2))


def make_qam(order: int) -> ComplexConstellation:
    """Build a unit power, Gray mapped square QAM constellation.

    ```python exec="true", source="material-block" result="python"
    from InfoGeoDetect.constellation import make_qam

    qam = make_qam(16)
    print(qam.alphabet.points, qam.average_power)
    ```

    Args:
        order: The number of points, one of `4`, `16` or `64`

    Returns:
        The constellation, with deterministic point ordering

    Raises:
        UnsupportedModulationError: If `order` is not supported
    """
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedModulationError(order, SUPPORTED_ORDERS)

    size = math.isqrt(order)
    grid = np.arange(-(size - 1), size, 2, dtype=f64)
    complex_grid = grid[:, None] + 1j * grid[None, :]

    # The only place the scale is computed
    scale = 1.0 / np.sqrt(np.mean(np.abs(complex_grid) ** 2))

    levels = grid * scale
    alphabet = RealAlphabet(
        points=levels,
        labels=gray_code(np.arange(size, dtype=i64)),
    )
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return ComplexConstellation(order=order, points=points, alphabet=alphabet)


def real_alphabet(constellation: ComplexConstellation) -> RealAlphabet:
    """The real alphabet shared by the real and imaginary parts."""
    return constellation.alphabet


def bits_to_symbols(
    bits: Array[u8] | Sequence[int],
    constellation: ComplexConstellation,
) -> Array[c128]:
    """Map a bit sequence onto complex constellation symbols.

    Each symbol consumes `bits_per_symbol` bits, most significant first: the
    first half selects the real part and the second half the imaginary part,
    each through the Gray labels of the real alphabet.

    Args:
        bits: A flat sequence of zeros and ones
        constellation: The constellation to map onto

    Returns:
        The complex symbols

    Raises:
        DimensionMismatchError: If the bit count is not a multiple of
            `bits_per_symbol`
    """
    arr = np.asarray(bits, dtype=i64).ravel()
    if arr.size % constellation.bits_per_symbol != 0:
        raise DimensionMismatchError(
            f"Got {arr.size} bits, which is not a multiple of"
            f" {constellation.bits_per_symbol} bits per symbol",
        )
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError("Bits must be zeros and ones")

    alphabet = constellation.alphabet
    m = alphabet.bits_per_dimension
    weights = 1 << np.arange(m - 1, -1, -1, dtype=i64)
    labels = arr.reshape(-1, 2, m) @ weights
    idx = alphabet.index_from_label(labels)
    return alphabet.points[idx[:, 0]] + 1j * alphabet.points[idx[:, 1]]  # type: ignore


def symbols_to_indices(
    symbols: Array[c128] | Sequence[complex],
    constellation: ComplexConstellation,
) -> Array[i64]:
    """Alphabet indices `(n, 2)` of the real and imaginary part of each symbol."""
    s = np.asarray(symbols, dtype=c128).ravel()
    alphabet = constellation.alphabet
    return np.stack(
        [alphabet.index_of(s.real), alphabet.index_of(s.imag)],
        axis=-1,
    )


def symbols_to_bits(
    symbols: Array[c128] | Sequence[complex],
    constellation: ComplexConstellation,
) -> Array[u8]:
    """Inverse of [`bits_to_symbols`][InfoGeoDetect.constellation.bits_to_symbols].

    Args:
        symbols: Complex values that are exact constellation points
        constellation: The constellation the symbols belong to

    Returns:
        The flat bit sequence

    Raises:
        OffConstellationError: If any symbol is not a constellation point
    """
    alphabet = constellation.alphabet
    labels = alphabet.labels[symbols_to_indices(symbols, constellation)]
    m = alphabet.bits_per_dimension
    shifts = np.arange(m - 1, -1, -1, dtype=i64)
    bits = (labels[..., None] >> shifts) & 1
    return bits.reshape(-1).astype(u8)


def symbol_errors(detected: Array[i64], truth: Array[i64]) -> int:
    """Count complex symbol errors from stacked real alphabet indices.

    Both arrays hold `2K` real-component indices ordered `[Re; Im]`; a complex
    symbol is wrong when either of its two components is.
    """
    d = np.asarray(detected).reshape(2, -1)
    t = np.asarray(truth).reshape(2, -1)
    return int(np.sum(np.any(d != t, axis=0)))
