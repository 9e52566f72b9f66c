from __future__ import annotations

import time

import numpy as np
import pytest
from pytest_cases import parametrize

from InfoGeoDetect.channel import generate_iid_rayleigh, stack_real, transmit
from InfoGeoDetect.constellation import make_qam
from InfoGeoDetect.exceptions import (
    DimensionMismatchError,
    InvalidConfigError,
    NoiseVarianceError,
)
from InfoGeoDetect.exp_family import PriorNaturalParams
from InfoGeoDetect.iga import (
    IgaConfig,
    IgaState,
    approximate_am_marginals,
    compute_loo_stats,
    compute_xi,
    detect,
    iga_step,
    lyapunov_diagnostic,
    multiplications_per_iteration,
)
from InfoGeoDetect.oracle import exact_mpm


def _instance(seed: int, n_obs: int, n_components: int, order: int):
    rng = np.random.default_rng(seed)
    alphabet = make_qam(order).alphabet
    size = alphabet.size
    G = rng.normal(size=(n_obs, n_components))
    y = rng.normal(size=n_obs)
    d = PriorNaturalParams(rng.uniform(-1, 1, size=(n_components, size - 1)))
    theta_am = rng.uniform(-3, 3, size=(n_obs, n_components, size - 1))
    return G, y, d, theta_am, alphabet


@parametrize(
    "kwargs",
    [
        {"damping": 0.0},
        {"damping": 1.5},
        {"max_iterations": -1},
        {"max_iterations": 2.5},
        {"convergence_tol": -1e-3},
        {"theta_clamp": 0.0},
    ],
)
def test_iga_config_rejects(kwargs: dict) -> None:
    with pytest.raises(InvalidConfigError):
        IgaConfig(**kwargs)


def test_iga_config_defaults():
    cfg = IgaConfig()
    assert (cfg.damping, cfg.max_iterations) == (0.5, 30)
    assert (cfg.convergence_tol, cfg.theta_clamp) == (1e-6, 40.0)
    assert IgaConfig(max_iterations=0).max_iterations == 0


def test_initial_state():
    d = PriorNaturalParams.uniform(4, 2)
    state = IgaState.initial(d, 6)
    assert state.theta_am.shape == (6, 4, 1)
    assert state.n_observations == 6
    assert state.iteration == 0
    assert not state.converged
    np.testing.assert_array_equal(state.am_vector(2).theta, 0.0)
    np.testing.assert_allclose(state.belief().prob, 0.5)


def test_loo_stats_at_origin_qpsk():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(6, 4))
    y = rng.normal(size=6)
    alphabet = make_qam(4).alphabet
    d = PriorNaturalParams.uniform(4, 2)
    stats = compute_loo_stats(G, y, d, np.zeros((6, 4, 1)), alphabet, 0.3)
    np.testing.assert_allclose(stats.mu, 0.0, atol=1e-15)
    np.testing.assert_allclose(stats.v, 0.5)
    expected = (np.sum(G**2, axis=1, keepdims=True) - G**2) / 2 + 0.3
    np.testing.assert_allclose(stats.var_y, expected, rtol=1e-12)
    np.testing.assert_allclose(stats.tilde_mu, y[:, None] + 0 * G, atol=1e-15)


@parametrize("order", [4, 16])
def test_loo_stats_match_direct_sums(order: int) -> None:
    G, y, d, theta_am, alphabet = _instance(order, 6, 4, order)
    noise_var = 0.2
    stats = compute_loo_stats(G, y, d, theta_am, alphabet, noise_var)

    points = alphabet.points
    for n in range(6):
        logits = np.concatenate([np.zeros((4, 1)), d.d + theta_am[n]], axis=1)
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        mu = p @ points
        v = p @ points**2 - mu**2
        for k in range(4):
            others = [j for j in range(4) if j != k]
            tilde_mu = y[n] - sum(G[n, j] * mu[j] for j in others)
            var_y = sum(G[n, j] ** 2 * v[j] for j in others) + noise_var
            assert stats.tilde_mu[n, k] == pytest.approx(tilde_mu, abs=1e-12)
            assert stats.var_y[n, k] == pytest.approx(var_y, abs=1e-12)
            assert stats.tilde_mu[n, k] == pytest.approx(
                y[n] - stats.row_sum_gmu[n] + G[n, k] * stats.mu[n, k],
                abs=1e-12,
            )


def test_loo_stats_zero_row():
    G, y, d, theta_am, alphabet = _instance(1, 4, 4, 4)
    G[2] = 0.0
    stats = compute_loo_stats(G, y, d, theta_am, alphabet, 0.7)
    np.testing.assert_array_equal(stats.var_y[2], 0.7)
    np.testing.assert_array_equal(stats.tilde_mu[2], y[2])
    assert np.all(stats.var_y >= 0.7)


@parametrize("noise_var", [0.0, -1.0])
def test_loo_stats_rejects_non_positive_noise(noise_var: float) -> None:
    G, y, d, theta_am, alphabet = _instance(2, 4, 2, 4)
    with pytest.raises(NoiseVarianceError):
        compute_loo_stats(G, y, d, theta_am, alphabet, noise_var)


def test_xi_vanishes_for_zero_gain():
    G, y, d, theta_am, alphabet = _instance(3, 4, 4, 16)
    G[:, 1] = 0.0
    stats = compute_loo_stats(G, y, d, theta_am, alphabet, 0.5)
    xi = compute_xi(stats, G, alphabet)
    assert xi.shape == (4, 4, 3)
    np.testing.assert_array_equal(xi[:, 1, :], 0.0)


@parametrize("seed", range(20))
@parametrize("order", [4, 16, 64])
def test_xi_equals_log_ratio_of_gaussian_marginal(seed: int, order: int) -> None:
    rng = np.random.default_rng(seed)
    n_obs = int(rng.integers(1, 7))
    n_components = int(rng.integers(1, 7))
    G, y, d, theta_am, alphabet = _instance(
        seed + 100 * order, n_obs, n_components, order
    )
    noise_var = float(rng.uniform(0.1, 2.0))

    stats = compute_loo_stats(G, y, d, theta_am, alphabet, noise_var)
    xi = compute_xi(stats, G, alphabet)
    marginals = approximate_am_marginals(stats, G, d, theta_am, alphabet)

    np.testing.assert_allclose(marginals.sum(axis=-1), 1.0, atol=1e-12)
    log_ratio = np.log(marginals[..., 1:]) - np.log(marginals[..., :1])
    np.testing.assert_allclose(log_ratio - d.d - theta_am, xi, rtol=0, atol=1e-10)


def test_step_with_zero_channel_keeps_state():
    d = PriorNaturalParams.uniform(4, 2)
    state = IgaState.initial(d, 6)
    new_state, delta = iga_step(
        state,
        np.zeros((6, 4)),
        np.ones(6),
        make_qam(4).alphabet,
        0.5,
        IgaConfig(),
    )
    assert delta == 0.0
    np.testing.assert_array_equal(new_state.theta_am, state.theta_am)
    assert new_state.iteration == 1
    assert new_state.converged


def test_undamped_step_is_sum_of_increments():
    G, y, d, _, alphabet = _instance(4, 6, 4, 4)
    state = IgaState.initial(d, 6)
    stats = compute_loo_stats(G, y, d, state.theta_am, alphabet, 0.5)
    xi = compute_xi(stats, G, alphabet)

    new_state, delta = iga_step(state, G, y, alphabet, 0.5, IgaConfig(damping=1.0))
    total = xi.sum(axis=0)
    np.testing.assert_allclose(new_state.theta_obm.theta, total, atol=1e-12)
    for n in range(6):
        expected = sum(xi[m] for m in range(6) if m != n)
        np.testing.assert_allclose(new_state.theta_am[n], expected, atol=1e-12)
    assert delta == pytest.approx(np.max(np.abs(total)))


def test_damped_step_is_convex_combination():
    G, y, d, theta_am, alphabet = _instance(5, 6, 4, 16)
    state = IgaState(
        d=d,
        theta_am=theta_am,
        theta_obm=IgaState.initial(d, 6).theta_obm.clamped(),
    )
    full, _ = iga_step(
        state, G, y, alphabet, 0.5, IgaConfig(damping=1.0, theta_clamp=1e6)
    )
    damped, _ = iga_step(
        state, G, y, alphabet, 0.5, IgaConfig(damping=0.3, theta_clamp=1e6)
    )
    np.testing.assert_allclose(
        damped.theta_am,
        0.3 * full.theta_am + 0.7 * state.theta_am,
        atol=1e-12,
    )
    np.testing.assert_allclose(
        damped.theta_obm.theta,
        0.3 * full.theta_obm.theta + 0.7 * state.theta_obm.theta,
        atol=1e-12,
    )


def test_coordinates_stay_clamped():
    alphabet = make_qam(4).alphabet
    G = 50.0 * np.eye(4)
    y = G @ np.full(4, alphabet.points[1])
    _, report = detect(G, y, alphabet, 1e-6, IgaConfig(theta_clamp=5.0))
    d = PriorNaturalParams.uniform(4, 2)
    state = IgaState.initial(d, 4)
    for _ in range(5):
        state, _ = iga_step(state, G, y, alphabet, 1e-6, IgaConfig(theta_clamp=5.0))
    assert np.all(np.abs(state.theta_am) <= 5.0)
    assert np.all(np.abs(state.theta_obm.theta) <= 5.0)
    assert report.indices == (1, 1, 1, 1)


def test_detect_decoupled_channel():
    alphabet = make_qam(16).alphabet
    truth = np.array([0, 3, 1, 2])
    G = 2.0 * np.eye(4)
    rng = np.random.default_rng(6)
    y = G @ alphabet.points[truth] + 1e-3 * rng.normal(size=4)
    belief, report = detect(G, y, alphabet, 0.5)
    assert report.indices == tuple(truth)
    np.testing.assert_allclose(report.symbols, alphabet.points[truth])
    np.testing.assert_array_equal(belief.decisions(), truth)
    assert report.converged


def test_detect_without_iterations_returns_prior():
    G, y, _, _, alphabet = _instance(7, 6, 4, 4)
    probs = np.array([[0.3, 0.7]] * 4)
    d = PriorNaturalParams(np.log(probs[:, 1:] / probs[:, :1]))
    belief, report = detect(G, y, alphabet, 0.5, IgaConfig(max_iterations=0), d)
    np.testing.assert_allclose(belief.prob, probs, atol=1e-15)
    assert report.iterations == 0
    assert not report.converged
    assert len(report.trace) == 0


def test_detect_trace_lengths():
    ch = generate_iid_rayleigh(8, 3, seed=8, noise_var_complex=3.0)
    qam = make_qam(4)
    s = stack_real(qam.points[[0, 1, 2]])
    signal = transmit(ch, s, seed=9)
    truth = qam.alphabet.index_of(s)
    cfg = IgaConfig(max_iterations=7, convergence_tol=0.0)
    _, report = detect(
        ch.real_matrix,
        signal.y_real,
        qam.alphabet,
        ch.noise_var_real,
        cfg,
        true_indices=truth,
        record_fim=True,
    )
    assert report.iterations == 7
    assert len(report.trace) == 7
    assert len(report.trace.bit_errors) == 7
    assert len(report.trace.wall_time) == 7
    assert all(v >= 0 for v in report.trace.min_fim_eigenvalue)
    assert report.diagnostics["min_fim_eigenvalue"] >= 0
    assert report.diagnostics["median_lyapunov_ratio"] > 0


def test_detect_is_deterministic():
    ch = generate_iid_rayleigh(6, 3, seed=10, noise_var_complex=0.5)
    qam = make_qam(16)
    signal = transmit(ch, stack_real(qam.points[[1, 5, 9]]), seed=11)
    args = (ch.real_matrix, signal.y_real, qam.alphabet, ch.noise_var_real)
    first = detect(*args)
    second = detect(*args)
    np.testing.assert_array_equal(first[0].prob, second[0].prob)
    assert first[1] == second[1]


def test_detect_rejects_bad_input():
    G, y, _, _, alphabet = _instance(12, 4, 2, 4)
    with pytest.raises(NoiseVarianceError):
        detect(G, y, alphabet, 0.0)
    with pytest.raises(DimensionMismatchError):
        detect(G, y[:3], alphabet, 0.5)
    with pytest.raises(DimensionMismatchError):
        detect(G, y, alphabet, 0.5, prior=PriorNaturalParams.uniform(3, 2))
    with pytest.raises(DimensionMismatchError):
        detect(G, y, alphabet, 0.5, true_indices=np.zeros(3, dtype=int))


def test_detect_agrees_with_exact_mpm():
    qam = make_qam(4)
    alphabet = qam.alphabet
    agree = total = mpm_errors = 0
    for trial in range(500):
        ch = generate_iid_rayleigh(2, 2, seed=trial, noise_var_complex=2 / 10 ** 1.2)
        rng = np.random.default_rng(1000 + trial)
        s = stack_real(qam.points[rng.integers(0, 4, size=2)])
        signal = transmit(ch, s, seed=2000 + trial)
        G, y, noise_var = ch.real_matrix, signal.y_real, ch.noise_var_real
        _, report = detect(G, y, alphabet, noise_var)
        exact = exact_mpm(G, y, noise_var, None, alphabet)
        agree += int(np.sum(np.asarray(report.indices) == exact))
        mpm_errors += int(np.sum(exact != alphabet.index_of(s)))
        total += exact.size
    assert 2e-3 <= mpm_errors / total <= 5e-2
    assert agree / total >= 0.95


def test_lyapunov_diagnostic_formula():
    alphabet = make_qam(4).alphabet
    G = np.array([[1.0, -2.0], [0.5, 0.0]])
    d = PriorNaturalParams.uniform(2, 2)
    stats = compute_loo_stats(G, np.zeros(2), d, np.zeros((2, 2, 1)), alphabet, 0.01)
    ratios = lyapunov_diagnostic(stats, 0.1, G=G, alphabet=alphabet)
    eps = 2.0 * (alphabet.span + alphabet.max_abs)
    np.testing.assert_allclose(ratios, eps / np.sqrt(stats.var_y))


def test_lyapunov_diagnostic_noise_dominated():
    alphabet = make_qam(4).alphabet
    G = np.array([[0.01, 0.01]])
    d = PriorNaturalParams.uniform(2, 2)
    stats = compute_loo_stats(G, np.zeros(1), d, np.zeros((1, 2, 1)), alphabet, 100.0)
    ratios = lyapunov_diagnostic(stats, 10.0, G=G, alphabet=alphabet)
    assert np.all(ratios <= 2.0 * np.sqrt(2.0 / np.pi) + 1e-12)


def test_lyapunov_diagnostic_single_user():
    ch = generate_iid_rayleigh(4, 1, seed=3)
    alphabet = make_qam(4).alphabet
    d = PriorNaturalParams.uniform(2, 2)
    G = ch.real_matrix
    stats = compute_loo_stats(G, np.zeros(8), d, np.zeros((8, 2, 1)), alphabet, 1e-3)
    ratios = lyapunov_diagnostic(stats, np.sqrt(1e-3), G=G, alphabet=alphabet)
    assert ratios.shape == (8, 2)
    assert np.all(np.isfinite(ratios))
    assert np.median(ratios) > 1.0


def test_multiplications_per_iteration():
    assert multiplications_per_iteration(64, 16, 2) == 16 * 64 * 16 * 3


def _median_step_time(n_rx: int, n_users: int) -> float:
    qam = make_qam(4)
    ch = generate_iid_rayleigh(n_rx, n_users, seed=n_rx, noise_var_complex=1.0)
    rng = np.random.default_rng(n_users)
    s = stack_real(qam.points[rng.integers(0, 4, size=n_users)])
    signal = transmit(ch, s, seed=n_rx + 1)
    d = PriorNaturalParams.uniform(2 * n_users, qam.alphabet.size)
    state = IgaState.initial(d, 2 * n_rx)
    args = (ch.real_matrix, signal.y_real, qam.alphabet, ch.noise_var_real, IgaConfig())
    iga_step(state, *args)
    times = []
    for _ in range(15):
        start = time.perf_counter()
        iga_step(state, *args)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


@pytest.mark.slow
def test_iteration_cost_scales_with_antennas_times_users():
    ratio = _median_step_time(512, 128) / _median_step_time(256, 64)
    assert 3.0 <= ratio <= 5.0
