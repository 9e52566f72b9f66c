"""Seeded Monte Carlo experiments: BER sweeps, convergence traces, diagnostics.

Every random quantity of a trial comes from its own generator, seeded by
[`derive_seed`][InfoGeoDetect.experiment.derive_seed] from the master seed,
the SNR index, the trial index and a purpose code. All detectors of a trial
see the same channel, bits and noise.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import TYPE_CHECKING, Callable

import numpy as np
from more_itertools import chunked

from InfoGeoDetect.channel import (
    ChannelInstance,
    generate_iid_rayleigh,
    load_channel,
    noise_var_from_snr,
    stack_real,
    transmit,
)
from InfoGeoDetect.constellation import bits_to_symbols, symbol_errors
from InfoGeoDetect.exceptions import InvalidConfigError
from InfoGeoDetect.exp_family import MarginalBelief, PriorNaturalParams
from InfoGeoDetect.experiment import (
    IID_CHANNEL,
    BerRecord,
    ExperimentConfig,
    SeedPurpose,
    derive_seed,
)
from InfoGeoDetect.iga import (
    IgaState,
    compute_loo_stats,
    detect,
    lyapunov_diagnostic,
    multiplications_per_iteration,
)
from InfoGeoDetect.oracle import (
    JointPosterior,
    exact_map,
    exact_mpm,
    kl_joint_to_product,
    lmmse_detect,
    lmmse_multiplications,
    oracle_fits,
)
from InfoGeoDetect.types import i64, u8

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence

    from InfoGeoDetect.channel import ReceivedSignal
    from InfoGeoDetect.types import Array

logger = logging.getLogger(__name__)

LYAPUNOV_USERS = (4, 8, 16, 32)
"""User counts of the Lyapunov ratio sweep in the diagnostics."""

TRIAL_BATCH_PER_JOB = 4
"""Trials handed to each worker thread per batch."""


@dataclass(frozen=True)
class DetectorOutcome:
    """Errors of one detector on one trial."""

    bit_errors: int
    symbol_errors: int
    iterations: int
    wall_time: float


@dataclass(frozen=True)
class TrialOutcome:
    """All detectors of one trial, keyed by detector name."""

    trial_index: int
    outcomes: dict[str, DetectorOutcome]


@dataclass(frozen=True)
class TraceRow:
    """Errors after one iteration, summed over the trials of an SNR point."""

    snr_db: float
    iteration: int
    bit_errors: int
    bits_total: int
    active_trials: int
    """Trials that had not converged before this iteration."""

    mean_wall_time: float = field(compare=False)

    @property
    def ber(self) -> float:
        """`bit_errors / bits_total`."""
        return self.bit_errors / self.bits_total if self.bits_total else 0.0


@dataclass(frozen=True)
class DiagnosticRow:
    """One `section, key, value` entry of the diagnostics report."""

    section: str
    key: str
    value: float


@dataclass(frozen=True)
class _Trial:
    channel: ChannelInstance
    signal: ReceivedSignal
    true_indices: Array[i64]


def resolve_channel(cfg: ExperimentConfig) -> ChannelInstance | None:
    """Load the fixed channel named by `cfg.channel`, or `None` for i.i.d. draws.

    Raises:
        InvalidConfigError: If the file's dimensions differ from the config
    """
    if cfg.channel == IID_CHANNEL:
        return None
    channel = load_channel(cfg.channel)
    if (channel.n_rx, channel.n_users) != (cfg.n_rx, cfg.n_users):
        raise InvalidConfigError(
            f"Channel file {cfg.channel} is {channel.n_rx}x{channel.n_users},"
            f" config asks for {cfg.n_rx}x{cfg.n_users}",
        )
    return channel


def _make_trial(
    cfg: ExperimentConfig,
    master: int,
    snr_index: int,
    trial_index: int,
    noise_var_complex: float,
    fixed_channel: ChannelInstance | None,
) -> _Trial:
    def seed(purpose: SeedPurpose) -> int:
        return derive_seed(master, snr_index, trial_index, purpose)

    if fixed_channel is None:
        channel = generate_iid_rayleigh(
            cfg.n_rx,
            cfg.n_users,
            seed(SeedPurpose.CHANNEL),
            noise_var_complex,
        )
    else:
        channel = fixed_channel.with_noise_variance(noise_var_complex)

    constellation = cfg.constellation
    n_bits = cfg.n_users * constellation.bits_per_symbol
    bits = np.random.default_rng(seed(SeedPurpose.BITS)).integers(
        0,
        2,
        size=n_bits,
        dtype=u8,
    )
    s_real = stack_real(bits_to_symbols(bits, constellation))
    signal = transmit(channel, s_real, seed(SeedPurpose.NOISE))
    logger.debug(
        "snr index %d, trial %d: seeds %d/%d/%d",
        snr_index,
        trial_index,
        seed(SeedPurpose.CHANNEL),
        seed(SeedPurpose.BITS),
        seed(SeedPurpose.NOISE),
    )
    return _Trial(channel, signal, constellation.alphabet.index_of(s_real))


def _run_detector(
    name: str,
    cfg: ExperimentConfig,
    trial: _Trial,
) -> tuple[Array[i64], int]:
    G = trial.channel.real_matrix
    y = trial.signal.y_real
    noise_var = trial.channel.noise_var_real
    alphabet = cfg.alphabet

    if name == "iga":
        if noise_var == 0:
            return exact_mpm(G, y, noise_var, None, alphabet), 0
        _, report = detect(G, y, alphabet, noise_var, cfg.iga)
        return np.asarray(report.indices, dtype=i64), report.iterations
    if name == "lmmse":
        return lmmse_detect(G, y, noise_var, alphabet)[1], 0
    if name == "exact_mpm":
        return exact_mpm(G, y, noise_var, None, alphabet), 0
    if name == "exact_map":
        return exact_map(G, y, noise_var, None, alphabet), 0
    raise InvalidConfigError(f"Unknown detector {name!r}")


def _run_trial(
    cfg: ExperimentConfig,
    master: int,
    snr_index: int,
    noise_var_complex: float,
    fixed_channel: ChannelInstance | None,
    trial_index: int,
) -> TrialOutcome:
    trial = _make_trial(
        cfg,
        master,
        snr_index,
        trial_index,
        noise_var_complex,
        fixed_channel,
    )
    alphabet = cfg.alphabet
    outcomes: dict[str, DetectorOutcome] = {}
    for name in cfg.detectors:
        start = time.perf_counter()
        indices, iterations = _run_detector(name, cfg, trial)
        elapsed = time.perf_counter() - start
        outcomes[name] = DetectorOutcome(
            bit_errors=alphabet.bit_errors(indices, trial.true_indices),
            symbol_errors=symbol_errors(indices, trial.true_indices),
            iterations=iterations,
            wall_time=elapsed,
        )
    return TrialOutcome(trial_index, outcomes)


def _ordered_outcomes(
    func: Callable[[int], TrialOutcome],
    trials: int,
    n_jobs: int,
) -> Iterator[TrialOutcome]:
    # Outcomes are yielded in trial order whatever the number of workers
    if n_jobs == 1:
        yield from (func(t) for t in range(trials))
        return

    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        for batch in chunked(range(trials), n_jobs * TRIAL_BATCH_PER_JOB):
            yield from pool.map(func, batch)


def run_ber_sweep(
    cfg: ExperimentConfig,
    *,
    fixed_channel: ChannelInstance | None = None,
) -> list[BerRecord]:
    """Bit and symbol error rates of every detector at every SNR point.

    ```python exec="true", source="material-block" result="python"
    from InfoGeoDetect.experiment import ExperimentConfig
    from InfoGeoDetect.harness import run_ber_sweep

    cfg = ExperimentConfig(n_rx=8, n_users=2, snr_db=(10.0,), trials=5, seed=1)
    for record in run_ber_sweep(cfg):
        print(record.detector, record.bit_errors, record.bits_total)
    ```

    An SNR point stops early once the trial just aggregated brings every
    detector to at least `cfg.min_bit_errors` bit errors. Trials are
    aggregated in index order, so the records do not depend on `n_jobs`.

    Args:
        cfg: The experiment; its `seed` must be set
        fixed_channel: Use this channel for every trial instead of
            `cfg.channel`

    Returns:
        One record per SNR point and detector, SNR-major, detectors in
        `cfg.detectors` order

    Raises:
        InvalidConfigError: If the configuration cannot run, before any work
    """
    master = cfg.require_seed()
    if fixed_channel is None:
        fixed_channel = resolve_channel(cfg)

    bits_per_trial = cfg.n_users * cfg.constellation.bits_per_symbol
    records: list[BerRecord] = []

    n_detectors = len(cfg.detectors)
    for snr_index, snr_db in enumerate(cfg.snr_db):
        noise_var_complex, _ = noise_var_from_snr(snr_db, cfg.n_users)
        if noise_var_complex == 0 and "iga" in cfg.detectors:
            logger.info("SNR %s dB is noiseless, iga is replaced by exact_mpm", snr_db)

        func = partial(
            _run_trial,
            cfg,
            master,
            snr_index,
            noise_var_complex,
            fixed_channel,
        )
        totals = {name: [0, 0, 0, 0.0] for name in cfg.detectors}
        n_done = 0
        for outcome in _ordered_outcomes(func, cfg.trials, cfg.n_jobs):
            n_done += 1
            for name, o in outcome.outcomes.items():
                t = totals[name]
                t[0] += o.bit_errors
                t[1] += o.symbol_errors
                t[2] += o.iterations
                t[3] += o.wall_time

            if cfg.min_bit_errors > 0 and all(
                t[0] >= cfg.min_bit_errors for t in totals.values()
            ):
                logger.info(
                    "SNR %s dB: stopping after %d trials with %d or more bit errors",
                    snr_db,
                    n_done,
                    cfg.min_bit_errors,
                )
                break

        for name in cfg.detectors:
            bit_err, sym_err, iterations, wall = totals[name]
            records.append(
                BerRecord(
                    detector=name,
                    snr_db=snr_db,
                    bit_errors=int(bit_err),
                    bits_total=n_done * bits_per_trial,
                    symbol_errors=int(sym_err),
                    symbols_total=n_done * cfg.n_users,
                    trials=n_done,
                    mean_iterations=iterations / n_done,
                    mean_wall_time=wall / n_done,
                ),
            )
        logger.info(
            "SNR %s dB done: %s",
            snr_db,
            ", ".join(f"{r.detector}={r.ber:.3e}" for r in records[-n_detectors:]),
        )

    return records


def _pad(values: Sequence[int], length: int) -> list[int]:
    if not values:
        return []
    return list(values) + [values[-1]] * (length - len(values))


def run_convergence_trace(
    cfg: ExperimentConfig,
    *,
    fixed_channel: ChannelInstance | None = None,
) -> list[TraceRow]:
    """Bit errors of the iterative detector after each of its iterations.

    Every trial runs `cfg.iga.max_iterations` sweeps or until it converges;
    a converged trial keeps contributing its final decision to the later
    iterations. All `cfg.trials` trials run, without early stopping, using the
    same seeds as [`run_ber_sweep`][InfoGeoDetect.harness.run_ber_sweep].

    Raises:
        InvalidConfigError: If `iga` is not among the detectors or an SNR
            point is noiseless
    """
    master = cfg.require_seed()
    if "iga" not in cfg.detectors:
        raise InvalidConfigError("A convergence trace needs 'iga' among the detectors")
    if cfg.has_noiseless_point:
        raise InvalidConfigError("A convergence trace needs finite SNR points")
    if fixed_channel is None:
        fixed_channel = resolve_channel(cfg)

    t_max = cfg.iga.max_iterations
    alphabet = cfg.alphabet
    bits_per_trial = cfg.n_users * cfg.constellation.bits_per_symbol
    rows: list[TraceRow] = []

    for snr_index, snr_db in enumerate(cfg.snr_db):
        noise_var_complex, _ = noise_var_from_snr(snr_db, cfg.n_users)
        errors = np.zeros(t_max, dtype=i64)
        active = np.zeros(t_max, dtype=i64)
        wall = np.zeros(t_max, dtype=float)

        for trial_index in range(cfg.trials):
            trial = _make_trial(
                cfg,
                master,
                snr_index,
                trial_index,
                noise_var_complex,
                fixed_channel,
            )
            _, report = detect(
                trial.channel.real_matrix,
                trial.signal.y_real,
                alphabet,
                trial.channel.noise_var_real,
                cfg.iga,
                true_indices=trial.true_indices,
            )
            per_iteration = report.trace.bit_errors or ()
            n_run = len(per_iteration)
            if n_run:
                errors += np.asarray(_pad(per_iteration, t_max), dtype=i64)
            active[:n_run] += 1
            wall[:n_run] += report.trace.wall_time

        for t in range(t_max):
            rows.append(
                TraceRow(
                    snr_db=snr_db,
                    iteration=t + 1,
                    bit_errors=int(errors[t]),
                    bits_total=cfg.trials * bits_per_trial,
                    active_trials=int(active[t]),
                    mean_wall_time=float(wall[t] / active[t]) if active[t] else 0.0,
                ),
            )
        logger.info("trace at SNR %s dB done", snr_db)

    return rows


def _first_finite_snr(cfg: ExperimentConfig) -> tuple[int, float]:
    for index, snr in enumerate(cfg.snr_db):
        if math.isfinite(snr):
            return index, snr
    raise InvalidConfigError("Diagnostics need at least one finite SNR point")


def _lyapunov_rows(
    cfg: ExperimentConfig,
    master: int,
    snr_db: float,
    users: Iterable[int],
) -> list[DiagnosticRow]:
    alphabet = cfg.alphabet
    rows = []
    for k_index, n_users in enumerate(users):
        _, noise_var = noise_var_from_snr(snr_db, n_users)
        d = PriorNaturalParams.uniform(2 * n_users, alphabet.size)
        medians = []
        for trial_index in range(cfg.trials):
            channel = generate_iid_rayleigh(
                cfg.n_rx,
                n_users,
                derive_seed(master, k_index, trial_index, SeedPurpose.CHANNEL),
            )
            G = channel.real_matrix
            state = IgaState.initial(d, G.shape[0])
            # The variances do not depend on the observation
            stats = compute_loo_stats(
                G,
                np.zeros(G.shape[0]),
                d,
                state.theta_am,
                alphabet,
                noise_var,
            )
            ratios = lyapunov_diagnostic(
                stats,
                np.sqrt(noise_var),
                G=G,
                alphabet=alphabet,
            )
            medians.append(float(np.median(ratios)))
        rows.append(
            DiagnosticRow(
                "lyapunov_median_ratio",
                f"K={n_users}",
                float(np.mean(medians)),
            ),
        )
    return rows


def _fim_rows(
    cfg: ExperimentConfig,
    master: int,
    snr_index: int,
    snr_db: float,
    fixed_channel: ChannelInstance | None,
) -> list[DiagnosticRow]:
    noise_var_complex, _ = noise_var_from_snr(snr_db, cfg.n_users)
    trial = _make_trial(cfg, master, snr_index, 0, noise_var_complex, fixed_channel)
    _, report = detect(
        trial.channel.real_matrix,
        trial.signal.y_real,
        cfg.alphabet,
        trial.channel.noise_var_real,
        cfg.iga,
        record_fim=True,
    )
    eigenvalues = report.trace.min_fim_eigenvalue or ()
    return [
        DiagnosticRow("fim_min_eigenvalue", f"iteration={t + 1}", value)
        for t, value in enumerate(eigenvalues)
    ]


def _kl_rows(
    cfg: ExperimentConfig,
    master: int,
    snr_index: int,
    snr_db: float,
    fixed_channel: ChannelInstance | None,
) -> list[DiagnosticRow]:
    alphabet = cfg.alphabet
    if not oracle_fits(cfg.n_components, alphabet.size):
        logger.warning(
            "KL diagnostics skipped: %d^%d outcomes are too many to enumerate",
            alphabet.size,
            cfg.n_components,
        )
        return []

    noise_var_complex, _ = noise_var_from_snr(snr_db, cfg.n_users)
    prior = MarginalBelief.uniform(cfg.n_components, alphabet.size)
    kl_iga, kl_prior = [], []
    for trial_index in range(cfg.trials):
        trial = _make_trial(
            cfg,
            master,
            snr_index,
            trial_index,
            noise_var_complex,
            fixed_channel,
        )
        G = trial.channel.real_matrix
        y = trial.signal.y_real
        noise_var = trial.channel.noise_var_real
        joint = JointPosterior.from_observation(G, y, noise_var, alphabet)
        belief, _ = detect(G, y, alphabet, noise_var, cfg.iga)
        kl_iga.append(kl_joint_to_product(joint, belief))
        kl_prior.append(kl_joint_to_product(joint, prior))

    iga_arr = np.asarray(kl_iga)
    prior_arr = np.asarray(kl_prior)
    return [
        DiagnosticRow("kl", "mean_exact_to_iga", float(np.mean(iga_arr))),
        DiagnosticRow("kl", "mean_exact_to_prior", float(np.mean(prior_arr))),
        DiagnosticRow(
            "kl",
            "fraction_iga_not_worse",
            float(np.mean(iga_arr <= prior_arr)),
        ),
    ]


def run_diagnostics(
    cfg: ExperimentConfig,
    *,
    fixed_channel: ChannelInstance | None = None,
    lyapunov_users: Sequence[int] = LYAPUNOV_USERS,
) -> list[DiagnosticRow]:
    """Quantities that indicate how well the Gaussian approximation holds.

    Sections, all at the first finite SNR point of `cfg`:

    * `lyapunov_median_ratio`: median Lyapunov ratio at the all-zero start for
      each user count in `lyapunov_users`, averaged over `cfg.trials` channels.
    * `fim_min_eigenvalue`: smallest Fisher information eigenvalue of the
      product belief after each sweep of trial `0`.
    * `kl`: `KL(exact posterior || belief)` for the detector's output and for
      the prior, when the instance can be enumerated.
    * `complexity`: real multiplications per sweep and per LMMSE detection.
    """
    master = cfg.require_seed()
    snr_index, snr_db = _first_finite_snr(cfg)
    if fixed_channel is None:
        fixed_channel = resolve_channel(cfg)

    rows = _lyapunov_rows(cfg, master, snr_db, lyapunov_users)
    rows += _fim_rows(cfg, master, snr_index, snr_db, fixed_channel)
    rows += _kl_rows(cfg, master, snr_index, snr_db, fixed_channel)
    rows += [
        DiagnosticRow(
            "complexity",
            "iga_multiplications_per_iteration",
            float(
                multiplications_per_iteration(
                    cfg.n_rx,
                    cfg.n_users,
                    cfg.alphabet_size,
                ),
            ),
        ),
        DiagnosticRow(
            "complexity",
            "lmmse_multiplications",
            float(lmmse_multiplications(cfg.n_rx, cfg.n_users)),
        ),
    ]
    return rows
