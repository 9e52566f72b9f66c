from __future__ import annotations

import time

import numpy as np

from InfoGeoDetect.channel import generate_iid_rayleigh, stack_real, transmit
from InfoGeoDetect.constellation import make_qam
from InfoGeoDetect.exp_family import PriorNaturalParams
from InfoGeoDetect.iga import (
    IgaConfig,
    IgaState,
    iga_step,
    multiplications_per_iteration,
)
from InfoGeoDetect.oracle import lmmse_detect, lmmse_multiplications

N_RX = 64
N_USERS = 16
REPEATS = 200


def time_iteration(order):
    qam = make_qam(order)
    alphabet = qam.alphabet
    channel = generate_iid_rayleigh(N_RX, N_USERS, seed=order, noise_var_complex=0.1)
    rng = np.random.default_rng(order)
    s = stack_real(qam.points[rng.integers(0, order, size=N_USERS)])
    signal = transmit(channel, s, seed=order + 1)
    G, y = channel.real_matrix, signal.y_real

    d = PriorNaturalParams.uniform(2 * N_USERS, alphabet.size)
    state = IgaState.initial(d, G.shape[0])
    cfg = IgaConfig()

    times = []
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        iga_step(state, G, y, alphabet, channel.noise_var_real, cfg)
        times.append(time.perf_counter() - t0)

    lmmse_times = []
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        lmmse_detect(G, y, channel.noise_var_real, alphabet)
        lmmse_times.append(time.perf_counter() - t0)

    print("###")
    print(f"{order}-QAM, {N_RX}x{N_USERS}", flush=True)
    print(
        "Multiplications per iteration",
        multiplications_per_iteration(N_RX, N_USERS, alphabet.size),
    )
    print("Multiplications per LMMSE detection", lmmse_multiplications(N_RX, N_USERS))
    print("Median time of one iteration", np.median(times))
    print("Median time of one LMMSE detection", np.median(lmmse_times))
    return float(np.median(times))


results = {order: time_iteration(order) for order in (4, 16, 64)}
print("###")
print("Time ratio 64-QAM / 4-QAM", results[64] / results[4])
print(
    "Count ratio 64-QAM / 4-QAM",
    multiplications_per_iteration(N_RX, N_USERS, 8)
    / multiplications_per_iteration(N_RX, N_USERS, 2),
)


def time_scaled_iteration(n_rx, n_users):
    qam = make_qam(4)
    channel = generate_iid_rayleigh(n_rx, n_users, seed=n_rx, noise_var_complex=1.0)
    rng = np.random.default_rng(n_users)
    s = stack_real(qam.points[rng.integers(0, 4, size=n_users)])
    signal = transmit(channel, s, seed=n_rx + 1)
    d = PriorNaturalParams.uniform(2 * n_users, qam.alphabet.size)
    state = IgaState.initial(d, 2 * n_rx)
    times = []
    for _ in range(REPEATS // 10):
        t0 = time.perf_counter()
        iga_step(
            state,
            channel.real_matrix,
            signal.y_real,
            qam.alphabet,
            channel.noise_var_real,
            IgaConfig(),
        )
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


small = time_scaled_iteration(256, 64)
large = time_scaled_iteration(512, 128)
print("###")
print("Median time of one iteration, 4-QAM 256x64", small)
print("Median time of one iteration, 4-QAM 512x128", large)
print("Time ratio 512x128 / 256x64 (4.0 expected)", large / small)
