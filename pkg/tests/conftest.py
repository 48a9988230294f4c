import itertools
import wave

import numpy as np
import pytest

from coughhmm.hmm import EmissionModel, HmmModel, Mode
from coughhmm.states import COUGH_TOPOLOGY, N_STATES, Topology


def write_pcm_wav(path, frames, sample_rate, sampwidth=2):
    """Stdlib WAV writer used as an independent oracle for the loader.

    ``frames`` are integers of shape (n,) or (n, channels).
    """
    frames = np.asarray(frames, dtype=np.int64)
    if frames.ndim == 1:
        frames = frames[:, None]
    if sampwidth == 1:
        raw = (frames + 128).astype("<u1").tobytes()
    elif sampwidth == 3:
        raw = b"".join(int(v).to_bytes(3, "little", signed=True) for v in frames.ravel())
    else:
        raw = frames.astype(f"<i{sampwidth}").tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(frames.shape[1])
        w.setsampwidth(sampwidth)
        w.setframerate(sample_rate)
        w.writeframes(raw)


def direct_dft_band_energies(x, sample_rate, edges=((0, 2000), (2000, 4000), (4000, 22000))):
    """Band energies from an explicit O(N^2) DFT, independent of numpy.fft."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    idx = np.arange(n)
    out = np.zeros(3)
    total = 0.0
    for k in range(n):
        xk = np.sum(x * np.exp(-2j * np.pi * k * idx / n))
        p = abs(xk) ** 2 / n
        total += p
        f = min(k, n - k) * sample_rate / n
        if f > 22000:
            continue
        for b, (lo, hi) in enumerate(edges):
            if lo <= f and (f < hi or (b == 2 and f <= hi)):
                out[b] += p
    return out, total


def random_model(rng, mode=Mode.MULTIVARIATE, topology=None, floor=1e-6):
    """Random model respecting ``topology`` (random sparse mask if None)."""
    if topology is None:
        if rng.random() < 0.5:
            topology = COUGH_TOPOLOGY
        else:
            mask = rng.random((N_STATES, N_STATES)) < 0.5
            mask[np.arange(N_STATES), rng.integers(0, N_STATES, N_STATES)] = True
            topology = Topology(mask)
    p = rng.random((N_STATES, N_STATES)) * topology.allowed
    p /= p.sum(axis=1, keepdims=True)
    init = rng.random(N_STATES) * (rng.random(N_STATES) < 0.8)
    if init.sum() == 0:
        init[0] = 1.0
    init /= init.sum()
    c = len(Mode(mode).channels)
    means = rng.normal(2.0, 2.0, (N_STATES, c))
    stds = rng.uniform(0.5, 2.0, (N_STATES, c))
    return HmmModel(topology, p, EmissionModel(mode, means, stds, floor), init)


def random_energies(rng, n):
    return np.exp(rng.normal(2.0, 2.5, (n, 3)))


def brute_force(model, energies):
    """Filtering posteriors, log-likelihood and best path by enumerating every path.

    Works in linear probability space with scipy-free Gaussian pdfs.
    """
    em = model.emissions
    e = np.asarray(energies, dtype=np.float64)
    if em.mode is Mode.UNIVARIATE:
        x = np.log(e.sum(axis=1, keepdims=True) + em.energy_floor)
    else:
        x = np.log(e + em.energy_floor)
    n = x.shape[0]
    dens = np.ones((n, N_STATES))
    for t in range(n):
        for s in range(N_STATES):
            for c in range(x.shape[1]):
                mu, sd = em.means[s, c], em.stds[s, c]
                dens[t, s] *= np.exp(-0.5 * ((x[t, c] - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    P, pi = model.transitions, model.initial

    posts = np.zeros((n, N_STATES))
    for t in range(n):
        paths = np.array(list(itertools.product(range(N_STATES), repeat=t + 1)))
        w = pi[paths[:, 0]] * dens[0, paths[:, 0]]
        for u in range(1, t + 1):
            w = w * P[paths[:, u - 1], paths[:, u]] * dens[u, paths[:, u]]
        for s in range(N_STATES):
            posts[t, s] = w[paths[:, t] == s].sum()
        total = w.sum()
        posts[t] /= total
    loglik = np.log(total)
    # itertools.product enumerates paths lexicographically, so the first maximum
    # is the lowest path among exact ties
    k = int(np.argmax(w))
    best, best_w = paths[k], w[k]
    return posts, loglik, np.array(best), np.log(best_w)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
