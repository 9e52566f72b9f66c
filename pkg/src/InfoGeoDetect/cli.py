"""The `igasd` command line.

```
igasd sweep --seed 1 --n-rx 64 --n-users 16 --snr-db 0 2 4 6 --tag desk
igasd trace --seed 1 --snr-db 5
igasd diagnose --seed 1 --n-rx 8 --n-users 2
igasd gen-channel --n-rx 8 --n-users 2 --seed 3 --out ch.csv --signal-out y.csv
igasd detect-one --channel-file ch.csv --signal-file y.csv --snr-db 10
```

Settings are taken from the `ExperimentConfig` defaults, then from the file
given with `--config`, then from the flags. Result files are written to
`--out-dir` as `<command>_<tag>.csv`, where the tag defaults to a UTC
timestamp, together with the configuration as `<command>_<tag>.json`.
Errors print one line to stderr and exit with status `2`.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from InfoGeoDetect.__version__ import __version__
from InfoGeoDetect.channel import (
    generate_iid_rayleigh,
    load_channel,
    load_received_signal,
    noise_var_from_snr,
    save_channel,
    save_received_signal,
    stack_real,
    transmit,
    unstack_real,
)
from InfoGeoDetect.constellation import bits_to_symbols, make_qam, symbols_to_bits
from InfoGeoDetect.exceptions import DimensionMismatchError
from InfoGeoDetect.experiment import (
    DETECTORS,
    ExperimentConfig,
    SeedPurpose,
    derive_seed,
)
from InfoGeoDetect.harness import run_ber_sweep, run_convergence_trace, run_diagnostics
from InfoGeoDetect.iga import detect
from InfoGeoDetect.oracle import exact_map, exact_mpm, lmmse_detect
from InfoGeoDetect.read_and_write.results_csv import (
    write_ber_csv,
    write_diagnostics_csv,
    write_trace_csv,
)
from InfoGeoDetect.types import u8

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 2

# Flag destination -> ExperimentConfig / IgaConfig key
_EXPERIMENT_FLAGS = (
    "n_rx",
    "n_users",
    "modulation",
    "snr_db",
    "detectors",
    "trials",
    "seed",
    "channel",
    "min_bit_errors",
    "n_jobs",
    "record_timing",
    "damping",
    "max_iterations",
    "convergence_tol",
    "theta_clamp",
)


def _add_iga_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("iterative detector")
    group.add_argument("--damping", type=float, help="damping alpha in (0, 1]")
    group.add_argument("--max-iterations", type=int, help="upper bound on sweeps")
    group.add_argument(
        "--tol",
        dest="convergence_tol",
        type=float,
        help="stop when the output coordinates change less than this",
    )
    group.add_argument("--theta-clamp", type=float, help="coordinate clamp")


def _add_experiment_flags(
    parser: argparse.ArgumentParser,
    *,
    seed_required: bool,
) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value settings file")
    parser.add_argument("--n-rx", type=int, help="receive antennas")
    parser.add_argument("--n-users", type=int, help="single-antenna users")
    parser.add_argument("--modulation", type=int, help="QAM order: 4, 16 or 64")
    parser.add_argument(
        "--snr-db",
        type=float,
        nargs="+",
        help="SNR points in dB; 'inf' runs noiseless",
    )
    parser.add_argument("--detectors", nargs="+", choices=DETECTORS)
    parser.add_argument("--trials", type=int, help="maximum trials per SNR point")
    parser.add_argument("--seed", type=int, required=seed_required, help="master seed")
    parser.add_argument("--channel", help="'iid' or a channel file used for all trials")
    parser.add_argument("--min-bit-errors", type=int, help="early stop, <= 0 disables")
    parser.add_argument("--n-jobs", type=int, help="worker threads per SNR point")
    parser.add_argument(
        "--record-timing",
        action="store_const",
        const=True,
        default=None,
        help="add wall-time columns to the result file",
    )
    parser.add_argument("--out-dir", type=Path, default=Path(), help="output directory")
    parser.add_argument("--tag", help="output file tag, defaults to a timestamp")
    _add_iga_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of `igasd`."""
    parser = argparse.ArgumentParser(
        prog="igasd",
        description="Iterative MIMO detection on the product manifold.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for per-iteration detail",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="BER of each detector over SNR")
    _add_experiment_flags(sweep, seed_required=True)

    trace = sub.add_parser("trace", help="BER after each iteration")
    _add_experiment_flags(trace, seed_required=True)

    diagnose = sub.add_parser("diagnose", help="Gaussian approximation diagnostics")
    _add_experiment_flags(diagnose, seed_required=False)

    gen = sub.add_parser("gen-channel", help="write an i.i.d. Rayleigh channel file")
    gen.add_argument("--n-rx", type=int, required=True)
    gen.add_argument("--n-users", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", type=Path, required=True, help="channel file to write")
    gen.add_argument(
        "--signal-out",
        type=Path,
        help="also transmit random symbols and write the received signal here",
    )
    gen.add_argument("--snr-db", type=float, default=10.0)
    gen.add_argument("--modulation", type=int, default=4)

    one = sub.add_parser("detect-one", help="detect one received signal")
    one.add_argument("--channel-file", type=Path, required=True)
    one.add_argument("--signal-file", type=Path, required=True)
    noise = one.add_mutually_exclusive_group(required=True)
    noise.add_argument("--snr-db", type=float, help="SNR the signal was sent at")
    noise.add_argument(
        "--noise-var",
        type=float,
        help="complex noise variance, instead of --snr-db",
    )
    one.add_argument("--modulation", type=int, default=4)
    one.add_argument("--detector", choices=DETECTORS, default="iga")
    _add_iga_flags(one)

    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the `--config` file and the flags."""
    cfg = ExperimentConfig()
    if args.config is not None:
        cfg = ExperimentConfig.from_config_file(args.config, base=cfg)
    overrides: dict[str, Any] = {
        key: getattr(args, key, None) for key in _EXPERIMENT_FLAGS
    }
    for key in ("snr_db", "detectors"):
        if overrides[key] is not None:
            overrides[key] = tuple(overrides[key])
    return cfg.with_overrides(**overrides)


def _output_stem(command: str, args: argparse.Namespace) -> Path:
    tag = args.tag or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir / f"{command}_{tag}"


def _cmd_experiment(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    stem = _output_stem(args.command, args)
    csv_path = stem.with_suffix(".csv")

    if args.command == "sweep":
        write_ber_csv(run_ber_sweep(cfg), csv_path, record_timing=cfg.record_timing)
    elif args.command == "trace":
        rows = run_convergence_trace(cfg)
        write_trace_csv(rows, csv_path, record_timing=cfg.record_timing)
    else:
        write_diagnostics_csv(run_diagnostics(cfg), csv_path)

    cfg.to_json(stem.with_suffix(".json"), indent=2)
    print(csv_path)
    return EXIT_OK


def _cmd_gen_channel(args: argparse.Namespace) -> int:
    noise_var_complex, _ = noise_var_from_snr(args.snr_db, args.n_users)
    channel = generate_iid_rayleigh(
        args.n_rx,
        args.n_users,
        derive_seed(args.seed, 0, 0, SeedPurpose.CHANNEL),
        noise_var_complex,
    )
    save_channel(channel, args.out)
    print(args.out)

    if args.signal_out is not None:
        constellation = make_qam(args.modulation)
        rng = np.random.default_rng(derive_seed(args.seed, 0, 0, SeedPurpose.BITS))
        n_bits = args.n_users * constellation.bits_per_symbol
        bits = rng.integers(0, 2, size=n_bits, dtype=u8)
        s_real = stack_real(bits_to_symbols(bits, constellation))
        noise_seed = derive_seed(args.seed, 0, 0, SeedPurpose.NOISE)
        signal = transmit(channel, s_real, noise_seed)
        save_received_signal(signal, args.signal_out)
        print(args.signal_out)
    return EXIT_OK


def _cmd_detect_one(args: argparse.Namespace) -> int:
    channel = load_channel(args.channel_file)
    signal = load_received_signal(args.signal_file)
    if signal.y_real.size != 2 * channel.n_rx:
        raise DimensionMismatchError(
            f"Signal has {signal.y_real.size // 2} entries, channel has"
            f" {channel.n_rx} receive antennas",
        )
    if args.noise_var is not None:
        channel = channel.with_noise_variance(args.noise_var)
    else:
        channel = channel.with_noise_variance(
            noise_var_from_snr(args.snr_db, channel.n_users)[0],
        )

    constellation = make_qam(args.modulation)
    alphabet = constellation.alphabet
    G, y, noise_var = channel.real_matrix, signal.y_real, channel.noise_var_real

    if args.detector == "lmmse":
        indices = lmmse_detect(G, y, noise_var, alphabet)[1]
    elif args.detector == "exact_map":
        indices = exact_map(G, y, noise_var, None, alphabet)
    elif args.detector == "exact_mpm" or noise_var == 0:
        indices = exact_mpm(G, y, noise_var, None, alphabet)
    else:
        iga_overrides = {
            k: getattr(args, k)
            for k in ("damping", "max_iterations", "convergence_tol", "theta_clamp")
            if getattr(args, k) is not None
        }
        cfg = ExperimentConfig(
            n_rx=channel.n_rx,
            n_users=channel.n_users,
            modulation=args.modulation,
        ).with_overrides(**iga_overrides)
        _, report = detect(G, y, alphabet, noise_var, cfg.iga)
        indices = np.asarray(report.indices)
        logger.info("%d iterations, converged=%s", report.iterations, report.converged)

    symbols = unstack_real(alphabet.points[indices])
    bits = symbols_to_bits(symbols, constellation).reshape(channel.n_users, -1)
    print("user,re,im,bits")
    for k, (s, b) in enumerate(zip(symbols, bits)):
        print(f"{k},{s.real:.17g},{s.imag:.17g},{''.join(str(int(x)) for x in b)}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Run `igasd` and return the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    try:
        if args.command in ("sweep", "trace", "diagnose"):
            return _cmd_experiment(args)
        if args.command == "gen-channel":
            return _cmd_gen_channel(args)
        return _cmd_detect_one(args)
    except (ValueError, OSError) as e:
        print(f"igasd {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR
