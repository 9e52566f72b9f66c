from __future__ import annotations

from collections.abc import Iterator
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import logsumexp, softmax

from InfoGeoDetect.types import f64, i64

if TYPE_CHECKING:
    from InfoGeoDetect.types import Array

MASK64 = (1 << 64) - 1
"""Mask keeping python integers inside the unsigned 64-bit range."""


def arange_chunked(
    start: int,
    stop: int,
    step: int = 1,
    *,
    chunk_size: int,
) -> Iterator[Array[i64]]:
    """Get np.arange in a chunked fashion.

    ```python exec="true", source="material-block" result="python"
    from InfoGeoDetect.functional import arange_chunked

    print(list(arange_chunked(0, 10, chunk_size=3)))
    ```

    Args:
        start: The start of the range
        stop: The stop of the range
        chunk_size: The size of the chunks
        step: The step size

    Returns:
        An iterator of np.ndarrays
    """
    assert step > 0
    assert chunk_size > 0
    assert start < stop

    n_items = int(np.ceil((stop - start) / step))
    n_chunks = int(np.ceil(n_items / chunk_size))

    for chunk in range(n_chunks):
        chunk_start = start + (chunk * chunk_size * step)
        chunk_stop = min(chunk_start + chunk_size * step, stop)
        yield np.arange(chunk_start, chunk_stop, step, dtype=i64)


def outcome_digits(indices: Array[i64], n_components: int, base: int) -> Array[i64]:
    """Decode flat outcome indices into per-component alphabet indices.

    Component `0` is the most significant digit, so increasing flat indices
    enumerate outcomes in lexicographic order.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.functional import outcome_digits

    print(outcome_digits(np.arange(4), n_components=2, base=2))
    ```

    Args:
        indices: Flat outcome indices in `[0, base**n_components)`
        n_components: The number of digits per outcome
        base: The alphabet size

    Returns:
        An integer array of shape `(len(indices), n_components)`
    """
    powers = base ** np.arange(n_components - 1, -1, -1, dtype=i64)
    return (indices[:, None] // powers[None, :]) % base  # type: ignore


def prepend_reference(exponents: Array[f64]) -> Array[f64]:
    """Prepend the zero exponent of reference class `0` along the last axis."""
    pad = [(0, 0)] * (exponents.ndim - 1) + [(1, 0)]
    return np.pad(exponents, pad, mode="constant", constant_values=0.0)


def softmax_with_reference(exponents: Array[f64]) -> Array[f64]:
    """Normalize log-ratio coordinates into probabilities.

    The last axis holds `L - 1` log-ratios against class `0`. The zero of the
    reference class is prepended, the maximum is subtracted and the result is
    exponentiated and normalized, so arbitrarily large entries saturate to a
    one-hot row instead of overflowing.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.functional import softmax_with_reference

    print(softmax_with_reference(np.array([[np.log(3.0)], [1e4]])))
    ```

    Args:
        exponents: Array of shape `(..., L - 1)`

    Returns:
        Probabilities of shape `(..., L)`, each row summing to one
    """
    return softmax(prepend_reference(exponents), axis=-1)  # type: ignore


def log_partition_with_reference(exponents: Array[f64]) -> Array[f64]:
    """Compute `ln(1 + sum(exp(exponents)))` along the last axis, stably."""
    return logsumexp(prepend_reference(exponents), axis=-1)  # type: ignore


def sorted_logsumexp(values: Array[f64], axis: int = -1) -> Array[f64]:
    """Log-sum-exp over `axis` after sorting along it.

    Sorting first makes the result a function of the multiset of values only,
    so any enumeration order of the same terms gives a bit-identical result.

    Args:
        values: The log-domain terms
        axis: The axis to reduce

    Returns:
        The reduced array
    """
    return logsumexp(np.sort(values, axis=axis), axis=axis)  # type: ignore


def nearest_index(x: Array[f64], points: Array[f64]) -> Array[i64]:
    """Index of the nearest point for every entry of `x`.

    `points` must be sorted ascending; ties resolve to the lowest index.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.functional import nearest_index

    print(nearest_index(np.array([-2.0, 0.0, 0.4]), np.array([-1.0, 1.0])))
    ```

    Args:
        x: Values to quantize
        points: Ascending quantization points

    Returns:
        Integer indices with the same shape as `x`
    """
    distance = np.abs(np.asarray(x, dtype=f64)[..., None] - points)
    return np.argmin(distance, axis=-1).astype(i64)


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 output function on a 64-bit integer.

    ```python exec="true", source="material-block" result="python"
    from InfoGeoDetect.functional import splitmix64

    print(hex(splitmix64(0)))
    ```
    """
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(*fields: int) -> int:
    """Hash a sequence of integers into one unsigned 64-bit seed.

    Starting from `h = 0`, every field is folded in as
    `h = splitmix64(h ^ (field mod 2**64))`. The stream is fully specified, so
    other implementations can reproduce the same seeds.

    Args:
        fields: The integers to mix, in order

    Returns:
        An integer in `[0, 2**64)`
    """
    h = 0
    for value in fields:
        h = splitmix64(h ^ (int(value) & MASK64))
    return h
