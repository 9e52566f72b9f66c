from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from InfoGeoDetect.channel import generate_iid_rayleigh, save_channel
from InfoGeoDetect.exceptions import InvalidConfigError
from InfoGeoDetect.experiment import ExperimentConfig
from InfoGeoDetect.harness import (
    resolve_channel,
    run_ber_sweep,
    run_convergence_trace,
    run_diagnostics,
)
from InfoGeoDetect.iga import IgaConfig


def _small(**kwargs) -> ExperimentConfig:
    defaults = {
        "n_rx": 4,
        "n_users": 2,
        "snr_db": (0.0, 6.0),
        "trials": 12,
        "seed": 2024,
        "min_bit_errors": 0,
    }
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def test_sweep_layout():
    cfg = _small(detectors=("lmmse", "iga", "exact_mpm"))
    records = run_ber_sweep(cfg)
    assert [(r.snr_db, r.detector) for r in records] == [
        (snr, det) for snr in cfg.snr_db for det in cfg.detectors
    ]
    for r in records:
        assert r.trials == 12
        assert r.bits_total == 12 * 2 * 2
        assert r.symbols_total == 12 * 2
    assert records[0].mean_iterations == 0.0
    assert 1.0 <= records[1].mean_iterations <= cfg.iga.max_iterations


def test_sweep_requires_seed():
    with pytest.raises(InvalidConfigError):
        run_ber_sweep(_small(seed=None))


def test_sweep_is_deterministic():
    cfg = _small(modulation=16)
    assert run_ber_sweep(cfg) == run_ber_sweep(cfg)


def test_sweep_depends_on_seed():
    first = run_ber_sweep(_small(trials=30))
    second = run_ber_sweep(_small(trials=30, seed=7))
    assert first != second


def test_sweep_does_not_depend_on_thread_count():
    cfg = _small(snr_db=(0.0,), trials=40, min_bit_errors=5)
    serial = run_ber_sweep(cfg)
    threaded = run_ber_sweep(replace(cfg, n_jobs=3))
    assert serial == threaded
    assert serial[0].trials < 40


def test_sweep_stops_when_every_detector_has_enough_errors():
    records = run_ber_sweep(_small(snr_db=(-5.0,), trials=200, min_bit_errors=4))
    assert all(r.bit_errors >= 4 for r in records)
    assert len({r.trials for r in records}) == 1
    assert records[0].trials < 200


def test_sweep_high_snr_is_error_free():
    cfg = _small(n_rx=8, snr_db=(50.0,), trials=20)
    for record in run_ber_sweep(cfg):
        assert record.bit_errors == 0
        assert record.symbol_errors == 0


def test_sweep_noiseless_point():
    cfg = _small(snr_db=(math.inf,), detectors=("iga", "lmmse", "exact_map"))
    records = run_ber_sweep(cfg)
    assert [r.bit_errors for r in records] == [0, 0, 0]
    assert records[0].mean_iterations == 0.0


def test_sweep_with_fixed_channel(tmp_path):
    channel = generate_iid_rayleigh(4, 2, seed=5)
    path = tmp_path / "channel.csv"
    save_channel(channel, path)

    cfg = _small(channel=str(path), snr_db=(4.0,))
    loaded = resolve_channel(cfg)
    assert loaded is not None
    np.testing.assert_array_equal(loaded.complex_matrix, channel.complex_matrix)
    from_file = run_ber_sweep(cfg)
    given = run_ber_sweep(_small(snr_db=(4.0,)), fixed_channel=channel)
    assert from_file == given

    with pytest.raises(InvalidConfigError):
        resolve_channel(_small(channel=str(path), n_rx=5))
    assert resolve_channel(_small()) is None


def test_trace_ends_at_sweep_result():
    cfg = _small(snr_db=(2.0, 8.0), trials=10, iga=IgaConfig(max_iterations=6))
    rows = run_convergence_trace(cfg)
    assert len(rows) == 2 * 6
    first = [(r.snr_db, r.iteration) for r in rows[:6]]
    assert first == [(2.0, t) for t in range(1, 7)]

    records = run_ber_sweep(replace(cfg, detectors=("iga",)))
    for snr_index, record in enumerate(records):
        last = rows[snr_index * 6 + 5]
        assert last.bit_errors == record.bit_errors
        assert last.bits_total == record.bits_total

    for row in rows:
        assert 0 <= row.active_trials <= 10
    assert rows[0].active_trials == 10
    actives = [r.active_trials for r in rows[:6]]
    assert actives == sorted(actives, reverse=True)
    assert run_convergence_trace(cfg) == rows


def test_trace_validation():
    with pytest.raises(InvalidConfigError):
        run_convergence_trace(_small(detectors=("lmmse",)))
    with pytest.raises(InvalidConfigError):
        run_convergence_trace(_small(snr_db=(math.inf,)))


def test_diagnostics_sections():
    cfg = _small(snr_db=(math.inf, 6.0), trials=3)
    rows = run_diagnostics(cfg, lyapunov_users=(1, 2))
    sections = {r.section for r in rows}
    assert sections == {
        "lyapunov_median_ratio",
        "fim_min_eigenvalue",
        "kl",
        "complexity",
    }

    lyapunov = {r.key: r.value for r in rows if r.section == "lyapunov_median_ratio"}
    assert list(lyapunov) == ["K=1", "K=2"]

    fim = [r for r in rows if r.section == "fim_min_eigenvalue"]
    assert fim[0].key == "iteration=1"
    assert all(r.value > 0 for r in fim)

    kl = {r.key: r.value for r in rows if r.section == "kl"}
    assert set(kl) == {
        "mean_exact_to_iga",
        "mean_exact_to_prior",
        "fraction_iga_not_worse",
    }
    assert kl["mean_exact_to_iga"] >= 0
    assert 0 <= kl["fraction_iga_not_worse"] <= 1

    complexity = {r.key: r.value for r in rows if r.section == "complexity"}
    assert complexity == {
        "iga_multiplications_per_iteration": 16 * 4 * 2 * 3,
        "lmmse_multiplications": 8 * (2 * 4 * 4 + 8),
    }


def test_diagnostics_iga_is_closer_to_the_posterior_than_the_prior():
    cfg = _small(n_rx=8, snr_db=(6.0,), trials=200)
    rows = run_diagnostics(cfg, lyapunov_users=(1,))
    kl = {r.key: r.value for r in rows if r.section == "kl"}
    assert kl["fraction_iga_not_worse"] >= 0.9
    assert all(r.value > 0 for r in rows if r.section == "fim_min_eigenvalue")


def test_diagnostics_skip_kl_when_too_large(caplog: pytest.LogCaptureFixture) -> None:
    cfg = _small(n_rx=16, n_users=13, snr_db=(10.0,), trials=1)
    with caplog.at_level(logging.WARNING, logger="InfoGeoDetect.harness"):
        rows = run_diagnostics(cfg, lyapunov_users=(1,))
    assert "KL diagnostics skipped" in caplog.text
    assert not any(r.section == "kl" for r in rows)


def test_diagnostics_need_finite_snr():
    with pytest.raises(InvalidConfigError):
        run_diagnostics(_small(snr_db=(math.inf,)), lyapunov_users=(1,))


@pytest.mark.slow
def test_lyapunov_ratio_shrinks_with_users():
    cfg = _small(n_rx=64, n_users=16, snr_db=(10.0,), trials=5)
    rows = run_diagnostics(cfg)
    ratios = [r.value for r in rows if r.section == "lyapunov_median_ratio"]
    assert len(ratios) == 4
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


SLOW_POINT = {"n_rx": 64, "n_users": 16, "snr_db": (-2.0, 0.0, 2.0)}


@pytest.mark.slow
def test_iga_is_not_worse_than_lmmse():
    cfg = _small(**SLOW_POINT, trials=5000, min_bit_errors=500)
    records = run_ber_sweep(cfg)
    checked = 0
    for iga, lmmse in zip(records[::2], records[1::2]):
        assert (iga.detector, lmmse.detector) == ("iga", "lmmse")
        assert min(iga.bit_errors, lmmse.bit_errors) >= 500
        if not 1e-4 <= lmmse.ber <= 1e-1:
            continue
        checked += 1
        slack = 2 * math.sqrt(iga.bit_errors + lmmse.bit_errors)
        assert iga.bit_errors <= lmmse.bit_errors + slack
    assert checked > 0


@pytest.mark.slow
def test_ten_iterations_are_enough():
    cfg = _small(**SLOW_POINT, trials=600)
    rows = run_convergence_trace(replace(cfg, snr_db=(0.0,)))
    errors = {r.iteration: r.bit_errors for r in rows}
    assert len(errors) == 30
    assert errors[30] > 0
    assert abs(errors[10] - errors[30]) <= 0.1 * errors[30]
