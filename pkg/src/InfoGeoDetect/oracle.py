"""Exact references by enumeration, and the LMMSE baseline.

The exact routines enumerate all `L**(2K)` outcomes of the real symbol vector
and are therefore guarded by [`MAX_ORACLE_BITS`][InfoGeoDetect.oracle.MAX_ORACLE_BITS].
Outcome `i` has digits `outcome_digits(i)`, component `0` being the most
significant, so flat order is lexicographic order. Weights are kept in the
log domain and reductions sort their terms first, so the results do not
depend on the enumeration order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from InfoGeoDetect.exceptions import (
    DimensionMismatchError,
    NoiseVarianceError,
    OracleSizeError,
    SingularSystemError,
)
from InfoGeoDetect.exp_family import (
    EacsVector,
    MarginalBelief,
    PriorNaturalParams,
    belief_to_theta,
)
from InfoGeoDetect.functional import (
    arange_chunked,
    nearest_index,
    outcome_digits,
    prepend_reference,
    sorted_logsumexp,
)
from InfoGeoDetect.types import f64, i64

if TYPE_CHECKING:
    from InfoGeoDetect.constellation import RealAlphabet
    from InfoGeoDetect.types import Array

logger = logging.getLogger(__name__)

MAX_ORACLE_BITS = 24
"""Enumeration is refused beyond `2**MAX_ORACLE_BITS` outcomes."""

ENUMERATION_CHUNK = 1 << 16
"""Outcomes evaluated per vectorized block."""

NOISELESS_RTOL = 1e-9
"""Relative slack under which residuals count as minimal at zero noise."""


def oracle_fits(n_components: int, alphabet_size: int) -> bool:
    """Whether `alphabet_size ** n_components` is within the enumeration bound."""
    return n_components * math.log2(alphabet_size) <= MAX_ORACLE_BITS


def check_oracle_size(n_components: int, alphabet_size: int) -> None:
    """Raise [`OracleSizeError`][InfoGeoDetect.exceptions.OracleSizeError] if
    the instance is too large to enumerate."""
    if not oracle_fits(n_components, alphabet_size):
        raise OracleSizeError(n_components, alphabet_size, MAX_ORACLE_BITS)


def _enumerate_log_weights(
    log_factors: Array[f64],
    G: Array[f64],
    y: Array[f64],
    noise_var: float,
    points: Array[f64],
) -> Array[f64]:
    # log_factors: (n, L) per-component log prior terms
    n_components, base = log_factors.shape
    n_outcomes = base**n_components
    log_prior = np.empty(n_outcomes, dtype=f64)
    sq_residual = np.empty(n_outcomes, dtype=f64)
    components = np.arange(n_components)

    for chunk in arange_chunked(0, n_outcomes, chunk_size=ENUMERATION_CHUNK):
        digits = outcome_digits(chunk, n_components, base)
        s = points[digits]
        residual = y[None, :] - s @ G.T
        sq_residual[chunk] = np.sum(residual * residual, axis=-1)
        log_prior[chunk] = np.sum(log_factors[components, digits], axis=-1)

    if noise_var > 0:
        return log_prior - sq_residual / (2.0 * noise_var)  # type: ignore

    # Zero noise leaves only the residual minimizers
    best = float(np.min(sq_residual))
    minimal = sq_residual <= best + NOISELESS_RTOL * (1.0 + best)
    return np.where(minimal, log_prior, -np.inf)


@dataclass(frozen=True, eq=False)
class JointPosterior:
    """An unnormalized log distribution over all `L**(2K)` outcomes.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.constellation import make_qam
    from InfoGeoDetect.oracle import JointPosterior

    a = make_qam(4).alphabet
    joint = JointPosterior.from_observation(np.eye(2), a.points[[0, 1]], 0.5, a)
    print(joint.marginals().prob)
    ```
    """

    log_weights: Array[f64]
    """Unnormalized log weights indexed by flat outcome."""

    n_components: int
    alphabet: RealAlphabet

    def __post_init__(self) -> None:
        check_oracle_size(self.n_components, self.alphabet.size)
        lw = np.array(self.log_weights, dtype=f64, copy=True)
        if lw.shape != (self.alphabet.size**self.n_components,):
            raise DimensionMismatchError(
                f"Expected {self.alphabet.size}**{self.n_components} log weights,"
                f" got shape {lw.shape}",
            )
        if np.any(np.isnan(lw)) or np.any(lw == np.inf) or np.all(lw == -np.inf):
            raise ValueError("Log weights must be finite or -inf, and not all -inf")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @property
    def n_outcomes(self) -> int:
        """`L ** (2K)`."""
        return int(self.log_weights.size)

    @property
    def log_normalizer(self) -> float:
        """Log of the sum of all weights."""
        return float(sorted_logsumexp(self.log_weights))

    def probabilities(self) -> Array[f64]:
        """Normalized outcome probabilities."""
        return np.exp(self.log_weights - self.log_normalizer)  # type: ignore

    def outcome(self, flat_index: int) -> Array[i64]:
        """Alphabet indices of one outcome."""
        idx = np.array([flat_index], dtype=i64)
        digits = outcome_digits(idx, self.n_components, self.alphabet.size)
        return digits[0]  # type: ignore

    def marginals(self) -> MarginalBelief:
        """Per-component marginal distributions."""
        base = self.alphabet.size
        cube = self.log_weights.reshape((base,) * self.n_components)
        log_marginals = np.empty((self.n_components, base), dtype=f64)
        for k in range(self.n_components):
            rows = np.moveaxis(cube, k, 0).reshape(base, -1)
            log_marginals[k] = sorted_logsumexp(rows, axis=-1)
        log_marginals -= logsumexp(log_marginals, axis=-1, keepdims=True)
        return MarginalBelief(np.exp(log_marginals))

    @classmethod
    def from_observation(
        cls,
        G: Array[f64],
        y: Array[f64],
        noise_var: float,
        alphabet: RealAlphabet,
        prior: PriorNaturalParams | None = None,
    ) -> JointPosterior:
        """The posterior of the real model `y = G s + z`, `z ~ N(0, noise_var I)`.

        At `noise_var == 0` the weight is the prior on the outcomes that
        minimize `||y - G s||` and zero elsewhere.

        Raises:
            OracleSizeError: If the instance is too large to enumerate
            NoiseVarianceError: If `noise_var < 0`
        """
        G = np.asarray(G, dtype=f64)
        y = np.asarray(y, dtype=f64)
        if G.ndim != 2 or y.shape != (G.shape[0],):
            raise DimensionMismatchError(
                f"y of shape {y.shape} does not match G of shape {G.shape}",
            )
        if not noise_var >= 0:
            raise NoiseVarianceError(f"Noise variance must be >= 0, got {noise_var}")
        n_components = G.shape[1]
        check_oracle_size(n_components, alphabet.size)
        if prior is None:
            prior = PriorNaturalParams.uniform(n_components, alphabet.size)
        if prior.d.shape != (n_components, alphabet.size - 1):
            raise DimensionMismatchError(
                f"Prior of shape {prior.d.shape} does not match"
                f" {n_components} components over {alphabet.size} points",
            )

        log_weights = _enumerate_log_weights(
            prepend_reference(prior.d),
            G,
            y,
            float(noise_var),
            alphabet.points,
        )
        return cls(log_weights, n_components, alphabet)

    @classmethod
    def from_probabilities(
        cls,
        probabilities: Array[f64],
        n_components: int,
        alphabet: RealAlphabet,
    ) -> JointPosterior:
        """Wrap an arbitrary distribution over the flat outcomes."""
        p = np.asarray(probabilities, dtype=f64).ravel()
        if np.any(p < 0):
            raise ValueError("Probabilities must be non-negative")
        with np.errstate(divide="ignore"):
            log_weights = np.log(p)
        return cls(log_weights, n_components, alphabet)


def exact_marginals(
    G: Array[f64],
    y: Array[f64],
    noise_var: float,
    prior: PriorNaturalParams | None,
    alphabet: RealAlphabet,
) -> MarginalBelief:
    """Posterior marginals of every real component by enumeration.

    Raises:
        OracleSizeError: If `L**(2K)` exceeds the enumeration bound
    """
    joint = JointPosterior.from_observation(G, y, noise_var, alphabet, prior)
    return joint.marginals()


def exact_m_projection(
    joint: JointPosterior,
    prior: PriorNaturalParams | None = None,
) -> EacsVector:
    """Coordinates of the product distribution closest to `joint` in KL.

    The projection matches marginals, so its coordinates are the log-ratios of
    the exact marginals minus the prior parameters.

    Raises:
        NonPositiveProbabilityError: If some marginal probability is zero,
            in which case the projection lies on the boundary
    """
    if prior is None:
        prior = PriorNaturalParams.uniform(joint.n_components, joint.alphabet.size)
    return belief_to_theta(prior, joint.marginals())


def kl_joint_to_product(joint: JointPosterior, belief: MarginalBelief) -> float:
    """`KL(joint || product belief)` by enumeration.

    Returns `inf` when the belief puts zero mass on an outcome the joint
    supports.
    """
    if belief.prob.shape != (joint.n_components, joint.alphabet.size):
        raise DimensionMismatchError(
            f"Belief of shape {belief.prob.shape} does not match the joint over"
            f" {joint.n_components} components",
        )
    log_z = joint.log_normalizer
    components = np.arange(joint.n_components)
    with np.errstate(divide="ignore"):
        log_q_table = np.log(belief.prob)

    total = 0.0
    for chunk in arange_chunked(0, joint.n_outcomes, chunk_size=ENUMERATION_CHUNK):
        log_p = joint.log_weights[chunk] - log_z
        support = np.isfinite(log_p)
        if not np.any(support):
            continue
        digits = outcome_digits(chunk[support], joint.n_components, joint.alphabet.size)
        log_q = np.sum(log_q_table[components, digits], axis=-1)
        if np.any(np.isneginf(log_q)):
            return math.inf
        lp = log_p[support]
        total += float(np.sum(np.exp(lp) * (lp - log_q)))
    return max(total, 0.0)


def exact_am_marginals(
    G: Array[f64],
    y: Array[f64],
    noise_var: float,
    d: PriorNaturalParams,
    theta_n: EacsVector,
    alphabet: RealAlphabet,
    n: int,
) -> Array[f64]:
    """Exact marginals of the auxiliary distribution of observation row `n`.

    That distribution keeps the product distribution with coordinates
    `d + theta_n` and the likelihood of row `n` alone.

    Returns:
        An array of shape `(2K, L)`
    """
    G = np.asarray(G, dtype=f64)
    y = np.asarray(y, dtype=f64)
    if not noise_var > 0:
        raise NoiseVarianceError(f"Noise variance must be positive, got {noise_var}")
    if not 0 <= n < G.shape[0]:
        raise DimensionMismatchError(f"Row {n} out of range for G of shape {G.shape}")
    n_components = G.shape[1]
    check_oracle_size(n_components, alphabet.size)

    log_weights = _enumerate_log_weights(
        prepend_reference(d.d + theta_n.theta),
        G[n : n + 1],
        y[n : n + 1],
        float(noise_var),
        alphabet.points,
    )
    joint = JointPosterior(log_weights, n_components, alphabet)
    return joint.marginals().prob


def exact_map(
    G: Array[f64],
    y: Array[f64],
    noise_var: float,
    prior: PriorNaturalParams | None,
    alphabet: RealAlphabet,
) -> Array[i64]:
    """Alphabet indices of the jointly most probable outcome.

    Ties go to the lexicographically smallest outcome.
    """
    joint = JointPosterior.from_observation(G, y, noise_var, alphabet, prior)
    # argmax returns the first maximum, which is the smallest outcome
    return joint.outcome(int(np.argmax(joint.log_weights)))


def exact_mpm(
    G: Array[f64],
    y: Array[f64],
    noise_var: float,
    prior: PriorNaturalParams | None,
    alphabet: RealAlphabet,
) -> Array[i64]:
    """Per-component argmax of the exact marginals, ties to the lowest index."""
    return exact_marginals(G, y, noise_var, prior, alphabet).decisions()


def lmmse_detect(
    G: Array[f64],
    y: Array[f64],
    noise_var: float,
    alphabet: RealAlphabet,
) -> tuple[Array[f64], Array[i64]]:
    """Linear MMSE estimate followed by a per-component hard decision.

    The soft estimate solves `(G^T G + noise_var I) s = G^T y` through a
    Cholesky factorization.

    Args:
        G: The `(2Nr, 2K)` real channel
        y: The `(2Nr,)` real observation
        noise_var: Noise variance per real dimension
        alphabet: The real alphabet used for the hard decision

    Returns:
        The soft estimate and the alphabet index nearest to each entry

    Raises:
        SingularSystemError: If the regularized Gram matrix is not positive
            definite, which needs `noise_var == 0` and a rank-deficient `G`
    """
    G = np.asarray(G, dtype=f64)
    y = np.asarray(y, dtype=f64)
    if G.ndim != 2 or y.shape != (G.shape[0],):
        raise DimensionMismatchError(
            f"y of shape {y.shape} does not match G of shape {G.shape}",
        )
    if not noise_var >= 0:
        raise NoiseVarianceError(f"Noise variance must be >= 0, got {noise_var}")

    gram = G.T @ G + noise_var * np.eye(G.shape[1], dtype=f64)
    try:
        factor = cho_factor(gram, lower=True)
    except LinAlgError as e:
        raise SingularSystemError(
            "G^T G + noise_var I is not positive definite",
        ) from e
    soft = cho_solve(factor, G.T @ y)
    if not np.all(np.isfinite(soft)):
        raise SingularSystemError("LMMSE solve produced non-finite values")
    return soft, nearest_index(soft, alphabet.points)


def lmmse_multiplications(n_rx: int, n_users: int) -> int:
    """Real multiplications of one LMMSE detection, `8 (2 Nr K**2 + K**3)`."""
    return 8 * (2 * n_rx * n_users**2 + n_users**3)
