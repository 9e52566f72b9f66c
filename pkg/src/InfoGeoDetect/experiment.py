"""Experiment configuration, result records and seed derivation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import IntEnum
from pathlib import Path
from typing import IO, TYPE_CHECKING, Any, Callable
from typing_extensions import Literal

from more_itertools import duplicates_everseen

from InfoGeoDetect.constellation import SUPPORTED_ORDERS, ComplexConstellation, make_qam
from InfoGeoDetect.exceptions import ConfigFileError, InvalidConfigError
from InfoGeoDetect.functional import MASK64, mix_seed
from InfoGeoDetect.iga import IgaConfig
from InfoGeoDetect.oracle import MAX_ORACLE_BITS, oracle_fits
from InfoGeoDetect.read_and_write.config_file import parse_config

if TYPE_CHECKING:
    from collections.abc import Mapping

    from InfoGeoDetect.constellation import RealAlphabet

DetectorName = Literal["iga", "lmmse", "exact_mpm", "exact_map"]

DETECTORS: tuple[DetectorName, ...] = ("iga", "lmmse", "exact_mpm", "exact_map")
"""Every detector a sweep can run, in output order."""

EXACT_DETECTORS = frozenset({"exact_mpm", "exact_map"})

IID_CHANNEL = "iid"
"""Channel source meaning a fresh i.i.d. Rayleigh draw per trial."""


class SeedPurpose(IntEnum):
    """Last field of the seed hash, one stream per random quantity."""

    CHANNEL = 1
    BITS = 2
    NOISE = 3


def derive_seed(
    master: int,
    snr_index: int,
    trial_index: int,
    purpose: SeedPurpose,
) -> int:
    """Seed of one random stream of one trial.

    The seed is `mix_seed(master, snr_index, trial_index, purpose)`, a
    SplitMix64 fold over the four fields starting from zero.

    ```python exec="true", source="material-block" result="python"
    from InfoGeoDetect.experiment import SeedPurpose, derive_seed

    print(derive_seed(1, 0, 0, SeedPurpose.CHANNEL))
    ```
    """
    return mix_seed(master, snr_index, trial_index, int(purpose))


def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _to_int(text: str) -> int:
    return int(text, 10)


# Keys of the flat config file and how to convert their text
_SCALAR_KEYS: dict[str, Callable[[str], Any]] = {
    "n_rx": _to_int,
    "n_users": _to_int,
    "modulation": _to_int,
    "trials": _to_int,
    "seed": _to_int,
    "min_bit_errors": _to_int,
    "n_jobs": _to_int,
    "channel": str,
    "record_timing": _to_bool,
}
_LIST_KEYS: dict[str, Callable[[str], Any]] = {
    "snr_db": float,
    "detectors": str,
}
_IGA_KEYS: dict[str, Callable[[str], Any]] = {
    "damping": float,
    "max_iterations": _to_int,
    "convergence_tol": float,
    "theta_clamp": float,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a Monte Carlo run, together with its seed.

    ```python exec="true", source="material-block" result="python"
    from InfoGeoDetect.experiment import ExperimentConfig

    cfg = ExperimentConfig(n_rx=8, n_users=2, snr_db=(10.0,), seed=1)
    print(cfg.to_dict())
    ```
    """

    n_rx: int = 64
    n_users: int = 16
    modulation: int = 4
    """Order of the square QAM constellation."""

    snr_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    detectors: tuple[str, ...] = ("iga", "lmmse")
    trials: int = 100
    """Maximum number of trials per SNR point."""

    seed: int | None = None
    """Master seed; commands that draw randomness require it."""

    iga: IgaConfig = field(default_factory=IgaConfig)
    channel: str = IID_CHANNEL
    """`"iid"` or the path of a channel file used for every trial."""

    min_bit_errors: int = 500
    """Stop an SNR point once every detector has this many bit errors, `<= 0`
    disables early stopping."""

    n_jobs: int = 1
    record_timing: bool = False
    """Add wall-time columns to the result files."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "detectors", tuple(str(d) for d in self.detectors))
        self._validate()

    def _validate(self) -> None:
        if self.n_rx < 1 or self.n_users < 1:
            raise InvalidConfigError(
                f"n_rx and n_users must be positive, got {self.n_rx}, {self.n_users}",
            )
        if self.modulation not in SUPPORTED_ORDERS:
            raise InvalidConfigError(
                f"modulation must be one of {SUPPORTED_ORDERS}, got {self.modulation}",
            )
        if not self.snr_db:
            raise InvalidConfigError("snr_db needs at least one value")
        if any(math.isnan(s) or s == -math.inf for s in self.snr_db):
            raise InvalidConfigError(
                f"snr_db values must be numbers, got {self.snr_db}",
            )
        if not self.detectors:
            raise InvalidConfigError("detectors needs at least one entry")
        unknown = [d for d in self.detectors if d not in DETECTORS]
        if unknown:
            raise InvalidConfigError(
                f"Unknown detectors {unknown}, choose from {list(DETECTORS)}",
            )
        repeated = list(duplicates_everseen(self.detectors))
        if repeated:
            raise InvalidConfigError(f"detectors lists {repeated} more than once")
        if self.trials < 1:
            raise InvalidConfigError(f"trials must be at least 1, got {self.trials}")
        if self.n_jobs < 1:
            raise InvalidConfigError(f"n_jobs must be at least 1, got {self.n_jobs}")
        if self.seed is not None and not 0 <= self.seed <= MASK64:
            raise InvalidConfigError(
                f"seed must fit in 64 unsigned bits, got {self.seed}",
            )

        fits = oracle_fits(self.n_components, self.alphabet_size)
        exact = EXACT_DETECTORS.intersection(self.detectors)
        if exact and not fits:
            raise InvalidConfigError(
                f"{sorted(exact)} enumerate {self.alphabet_size}^{self.n_components}"
                f" outcomes, more than 2^{MAX_ORACLE_BITS}",
            )
        if self.has_noiseless_point:
            if "iga" in self.detectors and not fits:
                raise InvalidConfigError(
                    "An infinite SNR point needs the exact oracle in place of iga,"
                    " but the instance is too large to enumerate",
                )
            if "lmmse" in self.detectors and self.n_rx < self.n_users:
                raise InvalidConfigError(
                    "lmmse at infinite SNR needs n_rx >= n_users",
                )

    @property
    def n_components(self) -> int:
        """Real components `2K`."""
        return 2 * self.n_users

    @property
    def alphabet_size(self) -> int:
        """Points `L` of the real alphabet."""
        return math.isqrt(self.modulation)

    @property
    def has_noiseless_point(self) -> bool:
        """Whether some SNR is `+inf`."""
        return any(math.isinf(s) for s in self.snr_db)

    @property
    def constellation(self) -> ComplexConstellation:
        """The QAM constellation of `modulation`."""
        return make_qam(self.modulation)

    @property
    def alphabet(self) -> RealAlphabet:
        """The real alphabet of `modulation`."""
        return self.constellation.alphabet

    def require_seed(self) -> int:
        """The master seed, raising if it was not set."""
        if self.seed is None:
            raise InvalidConfigError("A master seed is required for this command")
        return self.seed

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """A copy with the given fields replaced; `None` values are ignored.

        IgaConfig fields may be given by name and go into `iga`.
        """
        given = {k: v for k, v in overrides.items() if v is not None}
        iga_changes = {k: given.pop(k) for k in list(given) if k in _IGA_KEYS}
        unknown = set(given) - {f.name for f in fields(self)}
        if unknown:
            raise InvalidConfigError(f"Unknown configuration keys {sorted(unknown)}")
        if iga_changes:
            given["iga"] = _replace_iga(given.get("iga", self.iga), iga_changes)
        return replace(self, **given)

    def to_dict(self) -> dict[str, Any]:
        """A JSON compatible dictionary; infinite SNRs are written as `"inf"`."""
        d = asdict(self)
        d["snr_db"] = [s if math.isfinite(s) else str(s) for s in self.snr_db]
        d["detectors"] = list(self.detectors)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ExperimentConfig:
        """Inverse of [`to_dict`][InfoGeoDetect.experiment.ExperimentConfig.to_dict]."""
        values = dict(d)
        iga = values.pop("iga", None)
        if isinstance(iga, dict):
            values["iga"] = _replace_iga(IgaConfig(), iga)
        elif iga is not None:
            values["iga"] = iga
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfigError(f"Unknown configuration keys {sorted(unknown)}")
        if "snr_db" in values:
            values["snr_db"] = tuple(float(s) for s in values["snr_db"])
        if "detectors" in values:
            values["detectors"] = tuple(values["detectors"])
        return cls(**values)

    def to_json(self, path: str | Path | IO[str], **kwargs: Any) -> None:
        """Write [`to_dict`][InfoGeoDetect.experiment.ExperimentConfig.to_dict] as JSON.

        Args:
            path: Path to the file or a file object to write to
            **kwargs: Additional arguments to pass to `json.dump`
        """
        serialized = self.to_dict()
        if isinstance(path, (str, Path)):
            with open(path, "w") as f:
                json.dump(serialized, f, **kwargs)
        else:
            json.dump(serialized, path, **kwargs)

    @classmethod
    def from_json(cls, path: str | Path | IO[str], **kwargs: Any) -> ExperimentConfig:
        """Read a configuration written by
        [`to_json`][InfoGeoDetect.experiment.ExperimentConfig.to_json].
        """
        if isinstance(path, (str, Path)):
            with open(path) as f:
                d = json.load(f, **kwargs)
        else:
            d = json.load(path, **kwargs)
        return cls.from_dict(d)

    @classmethod
    def from_config_file(
        cls,
        source: str | Path | IO[str],
        base: ExperimentConfig | None = None,
    ) -> ExperimentConfig:
        """Apply a flat `key = value` file on top of `base`.

        Raises:
            ConfigFileError: For unknown keys, wrong value counts or values
                that do not convert, naming the line
            InvalidConfigError: If the resulting configuration is invalid
        """
        base = base if base is not None else cls()
        path = source if isinstance(source, (str, Path)) else None
        entries = parse_config(source)

        overrides: dict[str, Any] = {}
        for key, entry in entries.items():
            if key in _LIST_KEYS:
                convert = _LIST_KEYS[key]
                many = True
            elif key in _SCALAR_KEYS or key in _IGA_KEYS:
                convert = _SCALAR_KEYS.get(key) or _IGA_KEYS[key]
                many = False
            else:
                raise ConfigFileError(path, entry.line, f"unknown key {key!r}")

            if not many and len(entry.values) != 1:
                raise ConfigFileError(path, entry.line, f"{key!r} takes a single value")
            try:
                converted = [convert(v) for v in entry.values]
            except ValueError as e:
                raise ConfigFileError(path, entry.line, f"{key!r}: {e}") from e
            overrides[key] = tuple(converted) if many else converted[0]

        return base.with_overrides(**overrides)


def _replace_iga(iga: IgaConfig, changes: Mapping[str, Any]) -> IgaConfig:
    unknown = set(changes) - set(_IGA_KEYS)
    if unknown:
        raise InvalidConfigError(f"Unknown iga keys {sorted(unknown)}")
    return replace(iga, **changes)


@dataclass(frozen=True)
class BerRecord:
    """Aggregated errors of one detector at one SNR point."""

    detector: str
    snr_db: float
    bit_errors: int
    bits_total: int
    symbol_errors: int
    symbols_total: int
    trials: int
    mean_iterations: float
    """Average sweeps per trial; `0` for non-iterative detectors."""

    mean_wall_time: float = field(compare=False)
    """Average seconds per detection."""

    def __post_init__(self) -> None:
        if not 0 <= self.bit_errors <= self.bits_total:
            raise ValueError(
                f"bit_errors={self.bit_errors} outside [0, {self.bits_total}]",
            )
        if not 0 <= self.symbol_errors <= self.symbols_total:
            raise ValueError(
                f"symbol_errors={self.symbol_errors} outside [0, {self.symbols_total}]",
            )

    @property
    def ber(self) -> float:
        """`bit_errors / bits_total`."""
        return self.bit_errors / self.bits_total if self.bits_total else 0.0

    @property
    def ser(self) -> float:
        """`symbol_errors / symbols_total`."""
        return self.symbol_errors / self.symbols_total if self.symbols_total else 0.0
