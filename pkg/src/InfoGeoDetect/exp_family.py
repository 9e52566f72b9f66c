"""Coordinates and calculus of product distributions over a discrete alphabet.

Every real component `k` carries a categorical distribution over the `L`
alphabet points. It is written in exponential-family form relative to the
reference class `0`:

    p_k(s^(l)) = exp(d[k, l-1] + theta[k, l-1]) * p_k(s^(0)),  l = 1..L-1

where `d` are the natural parameters of the prior and `theta` the e-affine
coordinates of whatever distribution is being tracked. Arrays have the
component on the first axis and the class on the last.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import rel_entr

from InfoGeoDetect.exceptions import (
    DimensionMismatchError,
    NonPositiveProbabilityError,
)
from InfoGeoDetect.functional import (
    log_partition_with_reference,
    softmax_with_reference,
)
from InfoGeoDetect.types import f64, i64

if TYPE_CHECKING:
    from InfoGeoDetect.constellation import RealAlphabet
    from InfoGeoDetect.types import Array

ROW_SUM_ATOL = 1e-10
"""Tolerance on `|sum(row) - 1|` accepted for probability rows."""

DEFAULT_THETA_CLAMP = 40.0
"""Beyond this magnitude a coordinate is one-hot to double precision."""


def _as_matrix(values: Array[f64], name: str) -> Array[f64]:
    arr = np.array(values, dtype=f64, copy=True)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-dimensional, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PriorNaturalParams:
    """Natural parameters `d` of the per-component prior, shape `(2K, L - 1)`."""

    d: Array[f64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "d", _as_matrix(self.d, "d"))

    @property
    def n_components(self) -> int:
        """Number of real components `2K`."""
        return int(self.d.shape[0])

    @property
    def alphabet_size(self) -> int:
        """Alphabet size `L`."""
        return int(self.d.shape[1]) + 1

    @classmethod
    def uniform(cls, n_components: int, alphabet_size: int) -> PriorNaturalParams:
        """The all-zero parameters of a uniform prior."""
        return cls(np.zeros((n_components, alphabet_size - 1), dtype=f64))


@dataclass(frozen=True, eq=False)
class EacsVector:
    """E-affine coordinates `theta`, shape `(2K, L - 1)`."""

    theta: Array[f64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _as_matrix(self.theta, "theta"))

    @classmethod
    def zeros(cls, n_components: int, alphabet_size: int) -> EacsVector:
        """The origin, which together with `d` gives back the prior."""
        return cls(np.zeros((n_components, alphabet_size - 1), dtype=f64))

    def clamped(self, bound: float = DEFAULT_THETA_CLAMP) -> EacsVector:
        """A copy with every entry clipped to `[-bound, bound]`."""
        return EacsVector(clamp_theta(self.theta, bound))


@dataclass(frozen=True, eq=False)
class MarginalBelief:
    """Per-component probabilities over the alphabet, shape `(2K, L)`.

    !!! note

        Rows are allowed to contain exact zeros, which is what a saturated
        coordinate produces. Operations taking logarithms reject them.
    """

    prob: Array[f64]

    def __post_init__(self) -> None:
        prob = _as_matrix(self.prob, "prob")
        if np.any(prob < 0):
            raise ValueError("Probabilities must be non-negative")
        if not np.allclose(prob.sum(axis=-1), 1.0, rtol=0, atol=ROW_SUM_ATOL):
            raise ValueError("Every probability row must sum to one")
        object.__setattr__(self, "prob", prob)

    @property
    def n_components(self) -> int:
        """Number of real components `2K`."""
        return int(self.prob.shape[0])

    @property
    def alphabet_size(self) -> int:
        """Alphabet size `L`."""
        return int(self.prob.shape[1])

    @property
    def eta(self) -> Array[f64]:
        """Expectation of the indicator statistic, the columns `1..L-1`."""
        return self.prob[:, 1:]  # type: ignore

    def decisions(self) -> Array[i64]:
        """Per-component argmax; ties resolve to the lowest alphabet index."""
        return np.argmax(self.prob, axis=-1).astype(i64)

    @classmethod
    def uniform(cls, n_components: int, alphabet_size: int) -> MarginalBelief:
        """Uniform rows."""
        return cls(np.full((n_components, alphabet_size), 1.0 / alphabet_size))


def clamp_theta(theta: Array[f64], bound: float) -> Array[f64]:
    """Clip coordinates to `[-bound, bound]`."""
    return np.clip(theta, -bound, bound)


def _check_compatible(d: PriorNaturalParams, theta: Array[f64]) -> None:
    if theta.shape[-2:] != d.d.shape:
        raise DimensionMismatchError(
            f"Coordinates of shape {theta.shape} do not match prior {d.d.shape}",
        )


def _require_positive(prob: Array[f64]) -> None:
    if np.any(prob <= 0):
        raise NonPositiveProbabilityError(
            "Log-ratio coordinates are undefined for zero probabilities",
        )


def probability_moments(
    prob: Array[f64],
    points: Array[f64],
) -> tuple[Array[f64], Array[f64]]:
    """Mean and variance of alphabet-valued variables, along the last axis.

    Works on any leading shape, so it serves both a single belief and a stack
    of them.
    """
    mu = prob @ points
    second = prob @ (points * points)
    return mu, np.maximum(second - mu * mu, 0.0)


def prior_np(prior_probs: Array[f64]) -> PriorNaturalParams:
    """Natural parameters `d[k, l-1] = ln(p_k(s^(l)) / p_k(s^(0)))`.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.exp_family import prior_np

    print(prior_np(np.array([[0.2, 0.8]])).d)
    ```

    Args:
        prior_probs: `(2K, L)` strictly positive rows summing to one

    Returns:
        The natural parameters

    Raises:
        NonPositiveProbabilityError: If any probability is zero or negative
    """
    p = np.asarray(prior_probs, dtype=f64)
    if p.ndim != 2 or p.shape[1] < 2:
        raise DimensionMismatchError(f"Prior must have shape (2K, L>=2), got {p.shape}")
    _require_positive(p)
    if not np.allclose(p.sum(axis=-1), 1.0, rtol=0, atol=ROW_SUM_ATOL):
        raise ValueError("Every prior row must sum to one")
    logp = np.log(p)
    return PriorNaturalParams(logp[:, 1:] - logp[:, :1])


def theta_to_belief(d: PriorNaturalParams, theta: EacsVector) -> MarginalBelief:
    """Probabilities of the product distribution with coordinates `theta`.

    Evaluated as a softmax with the reference class prepended, so large
    coordinates saturate instead of overflowing.
    """
    _check_compatible(d, theta.theta)
    return MarginalBelief(softmax_with_reference(d.d + theta.theta))


def belief_to_theta(d: PriorNaturalParams, belief: MarginalBelief) -> EacsVector:
    """Coordinates `ln(p(s^(l)) / p(s^(0))) - d`, the left inverse of
    [`theta_to_belief`][InfoGeoDetect.exp_family.theta_to_belief].

    Raises:
        NonPositiveProbabilityError: If the belief has a zero entry
    """
    if belief.prob.shape[0] != d.n_components or belief.alphabet_size != (
        d.alphabet_size
    ):
        raise DimensionMismatchError(
            f"Belief of shape {belief.prob.shape} does not match prior {d.d.shape}",
        )
    _require_positive(belief.prob)
    logp = np.log(belief.prob)
    return EacsVector(logp[:, 1:] - logp[:, :1] - d.d)


def belief_moments(
    belief: MarginalBelief,
    alphabet: RealAlphabet,
) -> tuple[Array[f64], Array[f64]]:
    """Per-component mean and variance under `belief`.

    Returns:
        `(mu, v)`, both of length `2K`, with `v >= 0`
    """
    if belief.alphabet_size != alphabet.size:
        raise DimensionMismatchError(
            f"Belief over {belief.alphabet_size} classes, alphabet has {alphabet.size}",
        )
    return probability_moments(belief.prob, alphabet.points)


def free_energy(d: PriorNaturalParams, theta: EacsVector) -> Array[f64]:
    """Per-component free energy `ln(1 + sum_l exp(d + theta))`.

    The free energy of the whole product distribution is the sum of the
    entries.
    """
    _check_compatible(d, theta.theta)
    return log_partition_with_reference(d.d + theta.theta)


def kl_divergence_product(p: MarginalBelief, q: MarginalBelief) -> float:
    """KL divergence between two product distributions.

    For product distributions the joint divergence is the sum of the
    per-component ones.

    Raises:
        NonPositiveProbabilityError: If either belief has a zero entry
    """
    if p.prob.shape != q.prob.shape:
        raise DimensionMismatchError(
            f"Cannot compare beliefs of shapes {p.prob.shape} and {q.prob.shape}",
        )
    _require_positive(p.prob)
    _require_positive(q.prob)
    return float(np.sum(rel_entr(p.prob, q.prob)))


def fim_product(belief: MarginalBelief) -> Array[f64]:
    """Diagonal blocks of the Fisher information of the product manifold.

    Block `k` is `Diag(eta_k) - eta_k eta_k^T` with `eta_k` the probabilities of
    classes `1..L-1`; it is the covariance of the indicator statistic and the
    Hessian of the free energy.

    The diagonal `eta_i (1 - eta_i)` takes `1 - eta_i` as the sum of the other
    probabilities, so it stays positive next to a vertex.

    Returns:
        An array of shape `(2K, L - 1, L - 1)`
    """
    prob = belief.prob
    eta = belief.eta
    size = eta.shape[-1]
    others = ~np.eye(size, prob.shape[-1], k=1, dtype=bool)
    complement = np.sum(np.where(others, prob[:, None, :], 0.0), axis=-1)
    fim = -eta[:, :, None] * eta[:, None, :]
    diag = np.arange(size)
    fim[:, diag, diag] = eta * complement
    return fim


def min_fim_eigenvalue(belief: MarginalBelief) -> float:
    """Smallest eigenvalue over all Fisher information blocks."""
    return float(np.min(np.linalg.eigvalsh(fim_product(belief))))


def total_variation(p: MarginalBelief, q: MarginalBelief) -> Array[f64]:
    """Per-component total-variation distance `0.5 * sum |p - q|`."""
    if p.prob.shape != q.prob.shape:
        raise DimensionMismatchError(
            f"Cannot compare beliefs of shapes {p.prob.shape} and {q.prob.shape}",
        )
    return 0.5 * np.sum(np.abs(p.prob - q.prob), axis=-1)  # type: ignore
