"""Iterative detection on the product manifold.

Each observation row `n` of the real model owns an auxiliary distribution with
e-affine coordinates `theta_am[n]`; the product belief with coordinates
`theta_obm` is the output. One sweep approximates the interference seen by each
component with a Gaussian of matched mean and variance, turns it into the
increment `xi[n]` and applies a damped Jacobi update to every coordinate at
once.

Arrays are laid out as `(2Nr, 2K, ...)`: observation row first, real component
second, class last.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import softmax

from InfoGeoDetect.exceptions import (
    DimensionMismatchError,
    InvalidConfigError,
    NoiseVarianceError,
)
from InfoGeoDetect.exp_family import (
    DEFAULT_THETA_CLAMP,
    EacsVector,
    MarginalBelief,
    PriorNaturalParams,
    clamp_theta,
    min_fim_eigenvalue,
    probability_moments,
    theta_to_belief,
)
from InfoGeoDetect.functional import prepend_reference, softmax_with_reference
from InfoGeoDetect.types import f64, i64

if TYPE_CHECKING:
    from InfoGeoDetect.constellation import RealAlphabet
    from InfoGeoDetect.types import Array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IgaConfig:
    """Parameters of the fixed-point iteration.

    !!! note

        `max_iterations=0` is accepted and makes
        [`detect`][InfoGeoDetect.iga.detect] return the prior belief.
    """

    damping: float = 0.5
    """Step size `alpha` of the damped update, in `(0, 1]`."""

    max_iterations: int = 30
    """Upper bound `t_max` on the number of sweeps."""

    convergence_tol: float = 1e-6
    """Stop once the largest change of `theta_obm` falls below this."""

    theta_clamp: float = DEFAULT_THETA_CLAMP
    """Every coordinate is clipped to `[-theta_clamp, theta_clamp]`."""

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise InvalidConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise InvalidConfigError(
                f"max_iterations must be a non-negative integer,"
                f" got {self.max_iterations}",
            )
        if not self.convergence_tol >= 0.0:
            raise InvalidConfigError(
                f"convergence_tol must be non-negative, got {self.convergence_tol}",
            )
        if not self.theta_clamp > 0.0:
            raise InvalidConfigError(
                f"theta_clamp must be positive, got {self.theta_clamp}",
            )


@dataclass(frozen=True, eq=False)
class IgaState:
    """Coordinates of all auxiliary distributions and of the product belief."""

    d: PriorNaturalParams
    theta_am: Array[f64]
    """Shape `(2Nr, 2K, L - 1)`, one coordinate vector per observation row."""

    theta_obm: EacsVector
    iteration: int = 0
    converged: bool = False

    def __post_init__(self) -> None:
        am = np.array(self.theta_am, dtype=f64, copy=True)
        if am.ndim != 3 or am.shape[1:] != self.d.d.shape:
            raise DimensionMismatchError(
                f"theta_am of shape {am.shape} does not match prior {self.d.d.shape}",
            )
        if self.theta_obm.theta.shape != self.d.d.shape:
            raise DimensionMismatchError(
                f"theta_obm of shape {self.theta_obm.theta.shape} does not match"
                f" prior {self.d.d.shape}",
            )
        am.setflags(write=False)
        object.__setattr__(self, "theta_am", am)

    @property
    def n_observations(self) -> int:
        """Number of real observation rows `2Nr`."""
        return int(self.theta_am.shape[0])

    def am_vector(self, n: int) -> EacsVector:
        """Coordinates of the auxiliary distribution of row `n`."""
        return EacsVector(self.theta_am[n])

    def belief(self) -> MarginalBelief:
        """The product belief the state currently outputs."""
        return theta_to_belief(self.d, self.theta_obm)

    @classmethod
    def initial(cls, d: PriorNaturalParams, n_observations: int) -> IgaState:
        """The all-zero start, where every distribution equals the prior."""
        return cls(
            d=d,
            theta_am=np.zeros((n_observations, *d.d.shape), dtype=f64),
            theta_obm=EacsVector.zeros(d.n_components, d.alphabet_size),
        )


@dataclass(frozen=True)
class IterationTrace:
    """What happened in each sweep of one detection."""

    max_delta: tuple[float, ...] = ()
    bit_errors: tuple[int, ...] | None = None
    """Bit errors of the hard decision after each sweep, if the truth was given."""

    min_fim_eigenvalue: tuple[float, ...] | None = None
    wall_time: tuple[float, ...] = field(default=(), compare=False)
    """Seconds spent in each sweep; excluded from equality."""

    def __len__(self) -> int:
        return len(self.max_delta)


@dataclass(frozen=True, eq=False)
class LeaveOneOutStats:
    """Gaussian statistics of the interference seen by every `(n, k)` pair."""

    mu: Array[f64]
    """`(2Nr, 2K)` means of each component under the row's auxiliary belief."""

    v: Array[f64]
    """`(2Nr, 2K)` variances, same layout as `mu`."""

    row_sum_gmu: Array[f64]
    """`(2Nr,)` sums `sum_k g[n, k] * mu[n, k]`."""

    row_sum_g2v: Array[f64]
    """`(2Nr,)` sums `sum_k g[n, k]**2 * v[n, k]`."""

    tilde_mu: Array[f64]
    """`(2Nr, 2K)` observations with the other components' means removed."""

    var_y: Array[f64]
    """`(2Nr, 2K)` interference-plus-noise variances, at least `noise_var`."""

    noise_var: float


@dataclass(frozen=True)
class DetectionReport:
    """Hard decisions and bookkeeping of one
    [`detect`][InfoGeoDetect.iga.detect] call."""

    indices: tuple[int, ...]
    """Alphabet index decided for each real component."""

    symbols: tuple[float, ...]
    """The alphabet points of `indices`."""

    iterations: int
    converged: bool
    trace: IterationTrace
    diagnostics: dict[str, float] = field(default_factory=dict)
    """`min_fim_eigenvalue` of the output and `median_lyapunov_ratio` of the
    last statistics."""


def _check_model(
    G: Array[f64],
    y: Array[f64],
    d: PriorNaturalParams,
    alphabet: RealAlphabet,
) -> tuple[Array[f64], Array[f64]]:
    G = np.asarray(G, dtype=f64)
    y = np.asarray(y, dtype=f64)
    if G.ndim != 2:
        raise DimensionMismatchError(f"G must be a matrix, got shape {G.shape}")
    if y.shape != (G.shape[0],):
        raise DimensionMismatchError(
            f"y of shape {y.shape} does not match G of shape {G.shape}",
        )
    if G.shape[1] != d.n_components:
        raise DimensionMismatchError(
            f"G has {G.shape[1]} columns but the prior covers {d.n_components}"
            " components",
        )
    if alphabet.size != d.alphabet_size:
        raise DimensionMismatchError(
            f"Prior over {d.alphabet_size} classes, alphabet has {alphabet.size}",
        )
    return G, y


def _check_noise(noise_var: float) -> float:
    if not noise_var > 0:
        raise NoiseVarianceError(
            f"Iterative detection needs a positive noise variance, got {noise_var}",
        )
    return float(noise_var)


def compute_loo_stats(
    G: Array[f64],
    y: Array[f64],
    d: PriorNaturalParams,
    theta_am: Array[f64],
    alphabet: RealAlphabet,
    noise_var: float,
) -> LeaveOneOutStats:
    """Leave-one-out means and variances for every observation and component.

    Full row sums are formed once and the `k`-th term is subtracted again, so
    the cost is linear in `Nr * K * L`.

    Args:
        G: The `(2Nr, 2K)` real channel
        y: The `(2Nr,)` real observation
        d: Prior natural parameters
        theta_am: `(2Nr, 2K, L - 1)` coordinates of the auxiliary distributions
        alphabet: The real alphabet
        noise_var: Noise variance per real dimension

    Returns:
        The statistics

    Raises:
        NoiseVarianceError: If `noise_var <= 0`
    """
    noise_var = _check_noise(noise_var)
    G, y = _check_model(G, y, d, alphabet)
    theta_am = np.asarray(theta_am, dtype=f64)
    if theta_am.shape != (G.shape[0], *d.d.shape):
        raise DimensionMismatchError(
            f"theta_am of shape {theta_am.shape} does not match"
            f" {(G.shape[0], *d.d.shape)}",
        )

    prob = softmax_with_reference(d.d[None, :, :] + theta_am)
    mu, v = probability_moments(prob, alphabet.points)

    gmu = G * mu
    g2v = G * G * v
    row_sum_gmu = gmu.sum(axis=1)
    row_sum_g2v = g2v.sum(axis=1)

    tilde_mu = y[:, None] - row_sum_gmu[:, None] + gmu
    # Cancellation in the subtraction can dip below the noise floor
    var_y = np.maximum(row_sum_g2v[:, None] - g2v + noise_var, noise_var)

    return LeaveOneOutStats(
        mu=mu,
        v=v,
        row_sum_gmu=row_sum_gmu,
        row_sum_g2v=row_sum_g2v,
        tilde_mu=tilde_mu,
        var_y=var_y,
        noise_var=noise_var,
    )


def compute_xi(
    stats: LeaveOneOutStats,
    G: Array[f64],
    alphabet: RealAlphabet,
) -> Array[f64]:
    """Coordinate increments `xi[n, k, l]` of every auxiliary distribution.

    `xi = g (s0 - sl) (g (s0 + sl) - 2 tilde_mu) / (2 var_y)` with `g = G[n, k]`,
    `s0` the reference point and `sl` point `l`.

    Returns:
        An array of shape `(2Nr, 2K, L - 1)`
    """
    G = np.asarray(G, dtype=f64)
    s0 = alphabet.points[0]
    sl = alphabet.points[1:]
    g = G[:, :, None]
    numerator = g * (s0 - sl) * (g * (s0 + sl) - 2.0 * stats.tilde_mu[:, :, None])
    return numerator / (2.0 * stats.var_y[:, :, None])  # type: ignore


def approximate_am_marginals(
    stats: LeaveOneOutStats,
    G: Array[f64],
    d: PriorNaturalParams,
    theta_am: Array[f64],
    alphabet: RealAlphabet,
) -> Array[f64]:
    """Marginals of the auxiliary distributions under the Gaussian approximation.

    The categorical of row `n` is reweighted by the Gaussian likelihood
    `exp(-(tilde_mu - g s)**2 / (2 var_y))` and renormalized. This does not go
    through [`compute_xi`][InfoGeoDetect.iga.compute_xi], which makes it usable
    as an independent check of it.

    Returns:
        An array of shape `(2Nr, 2K, L)`
    """
    G = np.asarray(G, dtype=f64)
    log_prior = prepend_reference(d.d[None, :, :] + np.asarray(theta_am, dtype=f64))
    residual = stats.tilde_mu[:, :, None] - G[:, :, None] * alphabet.points
    log_lik = -(residual**2) / (2.0 * stats.var_y[:, :, None])
    return softmax(log_prior + log_lik, axis=-1)  # type: ignore


def _sweep(
    state: IgaState,
    G: Array[f64],
    y: Array[f64],
    alphabet: RealAlphabet,
    noise_var: float,
    cfg: IgaConfig,
) -> tuple[IgaState, float, LeaveOneOutStats]:
    stats = compute_loo_stats(G, y, state.d, state.theta_am, alphabet, noise_var)
    xi = compute_xi(stats, G, alphabet)
    total = xi.sum(axis=0)

    alpha = cfg.damping
    theta_am = alpha * (total[None, :, :] - xi) + (1.0 - alpha) * state.theta_am
    theta_obm = alpha * total + (1.0 - alpha) * state.theta_obm.theta

    theta_am = clamp_theta(theta_am, cfg.theta_clamp)
    theta_obm = clamp_theta(theta_obm, cfg.theta_clamp)
    max_delta = float(np.max(np.abs(theta_obm - state.theta_obm.theta), initial=0.0))

    new_state = IgaState(
        d=state.d,
        theta_am=theta_am,
        theta_obm=EacsVector(theta_obm),
        iteration=state.iteration + 1,
        converged=max_delta < cfg.convergence_tol,
    )
    return new_state, max_delta, stats


def iga_step(
    state: IgaState,
    G: Array[f64],
    y: Array[f64],
    alphabet: RealAlphabet,
    noise_var: float,
    cfg: IgaConfig,
) -> tuple[IgaState, float]:
    """One damped Jacobi sweep over all `2Nr + 1` coordinate vectors.

    Every increment is computed from the current state before any coordinate
    changes. Row `n` receives the increments of all other rows, formed as the
    total minus its own.

    Returns:
        The new state and the largest absolute change of `theta_obm`
    """
    new_state, max_delta, _ = _sweep(state, G, y, alphabet, noise_var, cfg)
    return new_state, max_delta


def lyapunov_diagnostic(
    stats: LeaveOneOutStats,
    noise_std: float,
    *,
    G: Array[f64],
    alphabet: RealAlphabet,
) -> Array[f64]:
    """Lyapunov ratio `eps / sqrt(var_y)` for every `(n, k)` pair.

    `eps` bounds the deviation of a single interference term from its mean.
    It is taken as `max|g| * (span + max|s|)`, or as the mean absolute
    deviation proxy `2 sigma sqrt(2/pi)` of the noise when that is larger.
    Smaller ratios mean the Gaussian approximation is more trustworthy.

    Returns:
        An array of shape `(2Nr, 2K)`
    """
    g_max = float(np.max(np.abs(G), initial=0.0))
    eps = max(
        g_max * (alphabet.span + alphabet.max_abs),
        2.0 * noise_std * np.sqrt(2.0 / np.pi),
    )
    return eps / np.sqrt(stats.var_y)  # type: ignore


def multiplications_per_iteration(n_rx: int, n_users: int, alphabet_size: int) -> int:
    """Real multiplications of one sweep, `16 Nr K (L + 1)`."""
    return 16 * n_rx * n_users * (alphabet_size + 1)


def detect(
    G: Array[f64],
    y: Array[f64],
    alphabet: RealAlphabet,
    noise_var: float,
    cfg: IgaConfig | None = None,
    prior: PriorNaturalParams | None = None,
    *,
    true_indices: Array[i64] | None = None,
    record_fim: bool = False,
) -> tuple[MarginalBelief, DetectionReport]:
    """Run the iteration from all-zero coordinates and decide per component.

    ```python exec="true", source="material-block" result="python"
    import numpy as np
    from InfoGeoDetect.constellation import make_qam
    from InfoGeoDetect.iga import detect

    a = make_qam(4).alphabet
    G = 2.0 * np.eye(2)
    belief, report = detect(G, G @ a.points, a, noise_var=0.01)
    print(report.indices, report.converged)
    ```

    Args:
        G: The `(2Nr, 2K)` real channel
        y: The `(2Nr,)` real observation
        alphabet: The real alphabet
        noise_var: Noise variance per real dimension, strictly positive
        cfg: Iteration parameters, defaults to
            [`IgaConfig()`][InfoGeoDetect.iga.IgaConfig]
        prior: Prior natural parameters, uniform when not given
        true_indices: When given, bit errors are recorded after every sweep
        record_fim: Record the smallest Fisher information eigenvalue after
            every sweep

    Returns:
        The output belief and the report. Decisions are the per-component
        argmax, ties going to the lowest alphabet index.

    Raises:
        NoiseVarianceError: If `noise_var <= 0`
        DimensionMismatchError: If the shapes are inconsistent
    """
    cfg = cfg if cfg is not None else IgaConfig()
    G = np.asarray(G, dtype=f64)
    if prior is None:
        if G.ndim != 2:
            raise DimensionMismatchError(f"G must be a matrix, got shape {G.shape}")
        prior = PriorNaturalParams.uniform(G.shape[1], alphabet.size)
    noise_var = _check_noise(noise_var)
    G, y = _check_model(G, y, prior, alphabet)
    if true_indices is not None:
        true_indices = np.asarray(true_indices, dtype=i64)
        if true_indices.shape != (prior.n_components,):
            raise DimensionMismatchError(
                f"true_indices of shape {true_indices.shape}, expected"
                f" {(prior.n_components,)}",
            )

    state = IgaState.initial(prior, G.shape[0])
    stats: LeaveOneOutStats | None = None
    deltas: list[float] = []
    errors: list[int] = []
    eigenvalues: list[float] = []
    times: list[float] = []

    for t in range(cfg.max_iterations):
        start = time.perf_counter()
        state, delta, stats = _sweep(state, G, y, alphabet, noise_var, cfg)
        times.append(time.perf_counter() - start)
        deltas.append(delta)
        logger.debug("sweep %d: max |delta theta_obm| = %.3e", t + 1, delta)

        if true_indices is not None or record_fim:
            belief = state.belief()
            if true_indices is not None:
                errors.append(alphabet.bit_errors(belief.decisions(), true_indices))
            if record_fim:
                eigenvalues.append(min_fim_eigenvalue(belief))

        if state.converged:
            break

    if stats is None:
        stats = compute_loo_stats(G, y, prior, state.theta_am, alphabet, noise_var)

    belief = state.belief()
    indices = belief.decisions()
    ratios = lyapunov_diagnostic(stats, np.sqrt(noise_var), G=G, alphabet=alphabet)
    trace = IterationTrace(
        max_delta=tuple(deltas),
        bit_errors=tuple(errors) if true_indices is not None else None,
        min_fim_eigenvalue=tuple(eigenvalues) if record_fim else None,
        wall_time=tuple(times),
    )
    report = DetectionReport(
        indices=tuple(int(i) for i in indices),
        symbols=tuple(float(s) for s in alphabet.points[indices]),
        iterations=state.iteration,
        converged=state.converged,
        trace=trace,
        diagnostics={
            "min_fim_eigenvalue": min_fim_eigenvalue(belief),
            "median_lyapunov_ratio": float(np.median(ratios)),
        },
    )
    return belief, report
