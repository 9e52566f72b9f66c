from __future__ import annotations

import json
import math
from io import StringIO

import pytest
from pytest_cases import parametrize

from InfoGeoDetect.exceptions import ConfigFileError, InvalidConfigError
from InfoGeoDetect.experiment import (
    BerRecord,
    ExperimentConfig,
    SeedPurpose,
    derive_seed,
)
from InfoGeoDetect.functional import mix_seed, splitmix64
from InfoGeoDetect.iga import IgaConfig


def test_default_config():
    cfg = ExperimentConfig()
    assert (cfg.n_rx, cfg.n_users, cfg.modulation) == (64, 16, 4)
    assert cfg.snr_db == (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    assert cfg.detectors == ("iga", "lmmse")
    assert cfg.trials == 100
    assert cfg.seed is None
    assert cfg.iga == IgaConfig()
    assert cfg.min_bit_errors == 500
    assert cfg.n_components == 32
    assert cfg.alphabet_size == 2
    assert not cfg.has_noiseless_point
    with pytest.raises(InvalidConfigError):
        cfg.require_seed()


def test_config_derived_alphabet():
    cfg = ExperimentConfig(modulation=64)
    assert cfg.alphabet_size == 8
    assert cfg.alphabet.size == 8
    assert cfg.constellation.order == 64


@parametrize(
    "kwargs",
    [
        {"n_rx": 0},
        {"n_users": 0},
        {"modulation": 8},
        {"snr_db": ()},
        {"snr_db": (float("nan"),)},
        {"snr_db": (-math.inf,)},
        {"detectors": ()},
        {"detectors": ("iga", "zf")},
        {"detectors": ("iga", "iga")},
        {"trials": 0},
        {"n_jobs": 0},
        {"seed": -1},
        {"seed": 2**64},
        {"detectors": ("exact_map",)},
        {"snr_db": (math.inf,), "detectors": ("iga",)},
        {"n_rx": 2, "n_users": 4, "snr_db": (math.inf,), "detectors": ("lmmse",)},
    ],
)
def test_invalid_config(kwargs: dict) -> None:
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(**kwargs)


def test_noiseless_point_allowed_when_oracle_fits():
    cfg = ExperimentConfig(
        n_rx=4, n_users=2, snr_db=(10.0, math.inf), detectors=("iga", "exact_map")
    )
    assert cfg.has_noiseless_point


def test_dict_and_json_round_trip(tmp_path):
    cfg = ExperimentConfig(
        n_rx=8,
        n_users=2,
        snr_db=(0.0, math.inf),
        detectors=("lmmse", "iga", "exact_mpm"),
        seed=7,
        iga=IgaConfig(damping=0.7, max_iterations=12),
        record_timing=True,
    )
    d = cfg.to_dict()
    assert d["snr_db"] == [0.0, "inf"]
    assert d["iga"]["damping"] == 0.7
    json.dumps(d)
    assert ExperimentConfig.from_dict(d) == cfg

    path = tmp_path / "run.json"
    cfg.to_json(path, indent=2)
    assert ExperimentConfig.from_json(path) == cfg

    buffer = StringIO()
    cfg.to_json(buffer)
    buffer.seek(0)
    assert ExperimentConfig.from_json(buffer) == cfg


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({"n_antennas": 4})
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({"iga": {"beta": 1.0}})


def test_with_overrides():
    cfg = ExperimentConfig(seed=1)
    other = cfg.with_overrides(n_rx=8, n_users=None, damping=0.25, max_iterations=5)
    assert other.n_rx == 8
    assert other.n_users == 16
    assert other.iga == IgaConfig(damping=0.25, max_iterations=5)
    assert other.seed == 1
    assert cfg.n_rx == 64
    with pytest.raises(InvalidConfigError):
        cfg.with_overrides(snr=3)


def test_from_config_file():
    text = """
# small run
n_rx = 8
n_users = 2
modulation = 16
snr_db = 0, 5, inf
detectors = iga, lmmse, exact_mpm
seed = 42
damping = 0.8
record_timing = yes
"""
    cfg = ExperimentConfig.from_config_file(StringIO(text))
    assert (cfg.n_rx, cfg.n_users, cfg.modulation) == (8, 2, 16)
    assert cfg.snr_db == (0.0, 5.0, math.inf)
    assert cfg.detectors == ("iga", "lmmse", "exact_mpm")
    assert cfg.seed == 42
    assert cfg.iga.damping == 0.8
    assert cfg.iga.max_iterations == 30
    assert cfg.record_timing


def test_from_config_file_uses_base(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("trials = 3\n")
    base = ExperimentConfig(n_rx=4, n_users=2, seed=9)
    cfg = ExperimentConfig.from_config_file(path, base)
    assert (cfg.n_rx, cfg.trials, cfg.seed) == (4, 3, 9)


@parametrize(
    "text, line",
    [
        ("n_rx = 8\nantennas = 4\n", 2),
        ("n_rx = 8, 9\n", 1),
        ("trials = many\n", 1),
        ("\nrecord_timing = maybe\n", 2),
        ("snr_db = 1, x\n", 1),
    ],
)
def test_from_config_file_errors(text: str, line: int) -> None:
    with pytest.raises(ConfigFileError) as e:
        ExperimentConfig.from_config_file(StringIO(text))
    assert e.value.line == line


def test_from_config_file_invalid_values():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_config_file(StringIO("damping = 2\n"))


def test_derive_seed_is_the_documented_hash():
    expected = splitmix64(splitmix64(splitmix64(splitmix64(5) ^ 1) ^ 2) ^ 3)
    assert derive_seed(5, 1, 2, SeedPurpose.NOISE) == expected
    assert derive_seed(5, 1, 2, SeedPurpose.NOISE) == mix_seed(5, 1, 2, 3)


def test_derive_seed_separates_streams():
    seeds = {
        derive_seed(1, snr, trial, purpose)
        for snr in range(3)
        for trial in range(20)
        for purpose in SeedPurpose
    }
    assert len(seeds) == 3 * 20 * 3
    assert all(0 <= s < 2**64 for s in seeds)


def test_ber_record():
    record = BerRecord("iga", 4.0, 3, 400, 2, 200, 10, 7.5, 0.01)
    assert record.ber == 3 / 400
    assert record.ser == 0.01
    empty = BerRecord("lmmse", 0.0, 0, 0, 0, 0, 0, 0.0, 0.0)
    assert empty.ber == 0.0
    with pytest.raises(ValueError):
        BerRecord("iga", 4.0, 401, 400, 0, 200, 10, 0.0, 0.0)
    with pytest.raises(ValueError):
        BerRecord("iga", 4.0, 0, 400, -1, 200, 10, 0.0, 0.0)


def test_ber_record_equality_ignores_wall_time():
    fast = BerRecord("iga", 4.0, 3, 400, 2, 200, 10, 7.5, 0.01)
    slow = BerRecord("iga", 4.0, 3, 400, 2, 200, 10, 7.5, 2.5)
    assert fast == slow
    assert fast != BerRecord("iga", 4.0, 4, 400, 2, 200, 10, 7.5, 0.01)
