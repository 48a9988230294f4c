"""Five-state cough HMM: supervised training, filtering, decoding, sampling.

Transitions are estimated from residence times of the labelled state runs;
emissions are per-state Gaussians over log band energy, combined across
channels as a product of independent densities.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .annotations import LabeledSeries, runs
from .features import BAND_EDGES_HZ, BIN_DURATION_S, FeatureSeries, FeatureVector
from .states import COUGH_TOPOLOGY, N_STATES, STATE_NAMES, StateLabel, Topology

FAMILY = "gaussian_log_energy"
ENERGY_FLOOR = 1e-6
MIN_STD = 1e-6
BRANCH_SMOOTHING = 1.0
MODEL_FORMAT = "coughhmm-model"
MODEL_VERSION = 1

_ROW_TOL = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


class ModelError(ValueError):
    """A model file or model object breaks the schema or a model invariant."""


class TrainingError(ValueError):
    """Training data cannot support a model (missing states, too few bins)."""


class Mode(str, enum.Enum):
    UNIVARIATE = "univariate"
    MULTIVARIATE = "multivariate"

    @property
    def channels(self) -> tuple[str, ...]:
        return ("e_total",) if self is Mode.UNIVARIATE else ("e_low", "e_mid", "e_high")


class Grouping(str, enum.Enum):
    """Binary views of the state posterior."""

    COUGH = "cough"  # A, B, C vs D, E
    COUGHING = "coughing"  # A, B, C, D vs E

    @property
    def positive_states(self) -> tuple[int, ...]:
        if self is Grouping.COUGH:
            return (StateLabel.A, StateLabel.B, StateLabel.C)
        return (StateLabel.A, StateLabel.B, StateLabel.C, StateLabel.D)


def channel_energies(energies: np.ndarray, mode: Mode) -> np.ndarray:
    """Select the modelled channels from ``(n, 3)`` band energies."""
    energies = np.asarray(energies, dtype=np.float64)
    if Mode(mode) is Mode.UNIVARIATE:
        return (energies[:, 0] + energies[:, 1] + energies[:, 2])[:, None]
    return energies


def _as_energies(features) -> np.ndarray:
    if isinstance(features, FeatureSeries):
        return features.energies
    if isinstance(features, FeatureVector):
        return np.array([[features.e_low, features.e_mid, features.e_high]])
    return np.atleast_2d(np.asarray(features, dtype=np.float64))


@dataclass(frozen=True)
class EmissionModel:
    """Per-state, per-channel Gaussian densities of ``ln(energy + energy_floor)``."""

    mode: Mode
    means: np.ndarray
    stds: np.ndarray
    energy_floor: float = ENERGY_FLOOR
    family: str = FAMILY

    def __post_init__(self):
        mode = Mode(self.mode)
        means = np.array(self.means, dtype=np.float64)
        stds = np.array(self.stds, dtype=np.float64)
        shape = (N_STATES, len(mode.channels))
        if means.shape != shape or stds.shape != shape:
            raise ModelError(f"{mode.value} emissions need {shape} means and stds, got {means.shape} and {stds.shape}")
        if not np.all(np.isfinite(means)):
            raise ModelError("emission means must be finite")
        if not np.all(np.isfinite(stds)) or np.any(stds <= 0):
            raise ModelError("emission standard deviations must be finite and positive")
        if not self.energy_floor > 0:
            raise ModelError(f"energy_floor must be positive, got {self.energy_floor}")
        if self.family != FAMILY:
            raise ModelError(f"unsupported density family {self.family!r}")
        means.setflags(write=False)
        stds.setflags(write=False)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "energy_floor", float(self.energy_floor))

    def log_energy(self, features) -> np.ndarray:
        return np.log(channel_energies(_as_energies(features), self.mode) + self.energy_floor)

    def channel_loglik(self, features) -> np.ndarray:
        """Log-densities with shape ``(n_bins, 5, n_channels)``."""
        x = self.log_energy(features)[:, None, :]
        z = (x - self.means) / self.stds
        return -0.5 * z * z - np.log(self.stds) - 0.5 * _LOG_2PI

    def loglik(self, features) -> np.ndarray:
        """Joint log-density per bin and state, shape ``(n_bins, 5)``."""
        return self.channel_loglik(features).sum(axis=2)


@dataclass(frozen=True)
class HmmModel:
    topology: Topology
    transitions: np.ndarray
    emissions: EmissionModel
    initial: np.ndarray
    bin_duration_s: float | None = BIN_DURATION_S
    band_edges_hz: tuple | None = BAND_EDGES_HZ

    def __post_init__(self):
        p = np.array(self.transitions, dtype=np.float64)
        init = np.array(self.initial, dtype=np.float64)
        check_transitions(p, self.topology)
        if init.shape != (N_STATES,):
            raise ModelError(f"initial distribution must have {N_STATES} entries")
        if np.any(init < 0) or np.any(init > 1) or abs(init.sum() - 1.0) > _ROW_TOL:
            raise ModelError(f"initial distribution must be a probability vector, got {init.tolist()}")
        p.setflags(write=False)
        init.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "initial", init)
        if self.band_edges_hz is not None:
            object.__setattr__(self, "band_edges_hz", tuple((float(a), float(b)) for a, b in self.band_edges_hz))

    @property
    def mode(self) -> Mode:
        return self.emissions.mode

    @property
    def log_transitions(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transitions)

    @property
    def log_initial(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.initial)

    def __eq__(self, other):
        if not isinstance(other, HmmModel):
            return NotImplemented
        return (
            self.topology == other.topology
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.initial, other.initial)
            and self.emissions.mode == other.emissions.mode
            and np.array_equal(self.emissions.means, other.emissions.means)
            and np.array_equal(self.emissions.stds, other.emissions.stds)
            and self.emissions.energy_floor == other.emissions.energy_floor
            and self.bin_duration_s == other.bin_duration_s
            and self.band_edges_hz == other.band_edges_hz
        )

    __hash__ = None


def check_transitions(p: np.ndarray, topology: Topology) -> None:
    if p.shape != (N_STATES, N_STATES):
        raise ModelError(f"transition matrix must be {N_STATES}x{N_STATES}, got {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ModelError("transition probabilities must lie in [0, 1]")
    bad = np.argwhere((p != 0) & ~topology.allowed)
    if bad.size:
        i, j = bad[0]
        raise ModelError(
            f"forbidden transition p[{STATE_NAMES[i]}][{STATE_NAMES[j]}] = {float(p[i, j]):.12g} must be 0"
        )
    sums = p.sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > _ROW_TOL:
            raise ModelError(f"transition row {STATE_NAMES[i]} sums to {float(s):.12g}, expected 1")


# ---------------------------------------------------------------- training


def _sequences(labels) -> list[np.ndarray]:
    if isinstance(labels, LabeledSeries):
        return [labels.labels]
    if isinstance(labels, np.ndarray):
        return [labels.astype(np.int64)] if labels.ndim == 1 else [row.astype(np.int64) for row in labels]
    labels = list(labels)
    if labels and all(np.ndim(x) == 0 and not isinstance(x, LabeledSeries) for x in labels):
        return [np.asarray([int(x) for x in labels], dtype=np.int64)]
    out = []
    for seq in labels:
        out.append(seq.labels if isinstance(seq, LabeledSeries) else np.asarray([int(x) for x in seq], dtype=np.int64))
    return out


def estimate_transitions(labels, topology: Topology = COUGH_TOPOLOGY, alpha: float = BRANCH_SMOOTHING) -> np.ndarray:
    """Transition matrix from mean residence times of state runs.

    The probability of leaving state ``x`` is the reciprocal of its mean run
    length. With one permitted successor that successor takes the whole
    leaving mass; with several, it is split by the observed exit counts with
    additive smoothing ``alpha``. Forbidden cells are always zero, whatever
    the labels contain.

    ``labels`` is one sequence of state indices, a list of them, or
    :class:`LabeledSeries` objects.
    """
    run_lengths: list[list[int]] = [[] for _ in range(N_STATES)]
    exits = np.zeros((N_STATES, N_STATES))
    for seq in _sequences(labels):
        seq_runs = runs(seq)
        for start, stop, state in seq_runs:
            run_lengths[state].append(stop - start)
        for (_, _, a), (_, _, b) in zip(seq_runs, seq_runs[1:]):
            exits[a, b] += 1

    missing = [STATE_NAMES[s] for s in range(N_STATES) if not run_lengths[s]]
    if missing:
        raise TrainingError(f"states absent from training labels: {', '.join(missing)}")

    p = np.zeros((N_STATES, N_STATES))
    for x in range(N_STATES):
        succ = topology.successors(x)
        if topology.allowed[x, x]:
            leave = 0.0 if not succ else 1.0 / float(np.mean(run_lengths[x]))
        else:
            leave = 1.0
        if len(succ) == 1:
            p[x, succ[0]] = leave
        elif succ:
            counts = exits[x, succ] + alpha
            p[x, succ] = leave * counts / counts.sum()
        p[x, x] = 1.0 - p[x].sum() if topology.allowed[x, x] else 0.0
    return p


def estimate_initial(labels) -> np.ndarray:
    """Occupancy frequency of each state; uniform when there are no labels."""
    counts = np.zeros(N_STATES)
    for seq in _sequences(labels):
        counts += np.bincount(seq, minlength=N_STATES)[:N_STATES]
    if counts.sum() == 0:
        return np.full(N_STATES, 1.0 / N_STATES)
    return counts / counts.sum()


def fit_emissions(
    labeled: LabeledSeries | Sequence[LabeledSeries],
    mode: Mode | str = Mode.MULTIVARIATE,
    energy_floor: float = ENERGY_FLOOR,
    min_std: float = MIN_STD,
) -> EmissionModel:
    """Maximum-likelihood log-energy Gaussians for every state and channel."""
    mode = Mode(mode)
    if isinstance(labeled, LabeledSeries):
        labeled = [labeled]
    x = np.concatenate([np.log(channel_energies(ls.features.energies, mode) + energy_floor) for ls in labeled])
    y = np.concatenate([ls.labels for ls in labeled])
    means = np.empty((N_STATES, x.shape[1]))
    stds = np.empty_like(means)
    for s in range(N_STATES):
        xs = x[y == s]
        if xs.shape[0] < 2:
            raise TrainingError(f"state {STATE_NAMES[s]} has {xs.shape[0]} training bin(s); need at least 2")
        means[s] = xs.mean(axis=0)
        stds[s] = np.maximum(xs.std(axis=0), min_std)
    return EmissionModel(mode, means, stds, energy_floor)


def train(
    labeled: LabeledSeries | Sequence[LabeledSeries],
    mode: Mode | str = Mode.MULTIVARIATE,
    topology: Topology = COUGH_TOPOLOGY,
    energy_floor: float = ENERGY_FLOOR,
    alpha: float = BRANCH_SMOOTHING,
    band_edges_hz=BAND_EDGES_HZ,
) -> HmmModel:
    if isinstance(labeled, LabeledSeries):
        labeled = [labeled]
    labeled = list(labeled)
    if not labeled:
        raise TrainingError("no training series")
    durations = {ls.features.bin_duration_s for ls in labeled}
    if len(durations) != 1:
        raise TrainingError(f"training series mix bin durations {sorted(durations)}")
    return HmmModel(
        topology=topology,
        transitions=estimate_transitions(labeled, topology, alpha),
        emissions=fit_emissions(labeled, mode, energy_floor),
        initial=estimate_initial(labeled),
        bin_duration_s=durations.pop(),
        band_edges_hz=band_edges_hz,
    )


# ---------------------------------------------------------------- inference


@dataclass
class DecodeResult:
    posteriors: np.ndarray | None = None
    viterbi_path: np.ndarray | None = None
    log_likelihood: float | None = None
    path_log_prob: float | None = None

    @property
    def predicted(self) -> np.ndarray:
        """Per-bin posterior argmax; ties go to the earlier state."""
        return np.argmax(self.posteriors, axis=1)


def _logsumexp_cols(m: np.ndarray) -> np.ndarray:
    top = m.max(axis=0)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(m - safe).sum(axis=0))


def forward_logspace(log_init: np.ndarray, log_trans: np.ndarray, log_emit: np.ndarray) -> tuple[np.ndarray, float]:
    """Filtering posteriors ``P(s_t | v_0..v_t)`` and the total log-likelihood."""
    n = log_emit.shape[0]
    post = np.empty_like(log_emit)
    a = log_init + log_emit[0]
    total = 0.0
    for t in range(n):
        if t:
            a = _logsumexp_cols(prev[:, None] + log_trans) + log_emit[t]
        top = a.max()
        norm = top + math.log(np.exp(a - top).sum())
        total += norm
        prev = a - norm
        post[t] = np.exp(prev)
    return post, total


def viterbi_logspace(log_init: np.ndarray, log_trans: np.ndarray, log_emit: np.ndarray) -> tuple[np.ndarray, float]:
    """Most probable path; every argmax resolves ties to the lowest state index."""
    n, k = log_emit.shape
    back = np.zeros((n, k), dtype=np.int64)
    delta = log_init + log_emit[0]
    cols = np.arange(k)
    for t in range(1, n):
        scores = delta[:, None] + log_trans
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], cols] + log_emit[t]
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    best = float(delta[path[-1]])
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def emission_loglik(model: HmmModel, state: int, v) -> float:
    """Joint log-density of one feature vector under ``state``."""
    return float(model.emissions.loglik(v)[0, int(state)])


def forward_filter(model: HmmModel, features) -> DecodeResult:
    log_emit = model.emissions.loglik(features)
    if log_emit.shape[0] == 0:
        raise ValueError("cannot filter an empty series")
    post, ll = forward_logspace(model.log_initial, model.log_transitions, log_emit)
    return DecodeResult(posteriors=post, log_likelihood=ll)


def viterbi(model: HmmModel, features) -> DecodeResult:
    log_emit = model.emissions.loglik(features)
    if log_emit.shape[0] == 0:
        raise ValueError("cannot decode an empty series")
    path, best = viterbi_logspace(model.log_initial, model.log_transitions, log_emit)
    return DecodeResult(viterbi_path=path, path_log_prob=best)


def decode(model: HmmModel, features) -> DecodeResult:
    """Forward filtering and Viterbi decoding in one pass over the emissions."""
    log_emit = model.emissions.loglik(features)
    if log_emit.shape[0] == 0:
        raise ValueError("cannot decode an empty series")
    post, ll = forward_logspace(model.log_initial, model.log_transitions, log_emit)
    path, best = viterbi_logspace(model.log_initial, model.log_transitions, log_emit)
    return DecodeResult(post, path, ll, best)


def group_scores(posteriors: np.ndarray, grouping: Grouping | str) -> np.ndarray:
    """Posterior mass of the grouping's positive states, per bin."""
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    score = posteriors[:, list(Grouping(grouping).positive_states)].sum(axis=1)
    return np.clip(score, 0.0, 1.0)


# ---------------------------------------------------------------- sampling


def sample(model: HmmModel, n_bins: int, seed=None, bin_duration_s: float | None = None) -> LabeledSeries:
    """Draw a labelled feature series from the model.

    Univariate models generate total energy only, which is placed in the
    low band with mid and high set to zero.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    rng = np.random.default_rng(seed)
    support = [np.flatnonzero(row > 0) for row in model.transitions]
    cum = []
    for row, idx in zip(model.transitions, support):
        c = np.cumsum(row[idx])
        c[-1] = 1.0
        cum.append(c)
    init_idx = np.flatnonzero(model.initial > 0)
    init_cum = np.cumsum(model.initial[init_idx])
    init_cum[-1] = 1.0

    u = rng.random(n_bins)
    path = np.empty(n_bins, dtype=np.int64)
    s = int(init_idx[np.searchsorted(init_cum, u[0], side="right")])
    path[0] = s
    for t in range(1, n_bins):
        s = int(support[s][np.searchsorted(cum[s], u[t], side="right")])
        path[t] = s

    em = model.emissions
    z = rng.standard_normal((n_bins, em.means.shape[1]))
    log_e = em.means[path] + em.stds[path] * z
    e = np.maximum(np.exp(log_e) - em.energy_floor, 0.0)
    if em.mode is Mode.UNIVARIATE:
        e = np.column_stack([e[:, 0], np.zeros(n_bins), np.zeros(n_bins)])
    duration = bin_duration_s or model.bin_duration_s or BIN_DURATION_S
    return LabeledSeries(FeatureSeries(e, duration, source_id=f"synthetic-{seed}"), path)


def demo_model(mode: Mode | str = Mode.MULTIVARIATE, std: float = 0.3) -> HmmModel:
    """A hand-set model with roughly realistic cough band energies.

    Log-energy means are loosely based on typical onset, tail and silence
    magnitudes; every pair of states differs by at least six ``std`` in some
    channel.
    """
    mode = Mode(mode)
    means = np.array(
        [
            [10.4, 7.0, 6.5],  # A: explosive onset, strong low band
            [8.4, 6.8, 7.4],  # B
            [5.9, 2.1, 0.7],  # C
            [5.2, 0.0, -1.5],  # D
            [1.1, -0.9, -2.8],  # E
        ]
    )
    if mode is Mode.UNIVARIATE:
        means = np.log(np.exp(means).sum(axis=1, keepdims=True))
    stds = np.full_like(means, std)
    p = np.zeros((N_STATES, N_STATES))
    A, B, C, D, E = range(N_STATES)
    p[A, A], p[A, B] = 0.75, 0.25
    p[B, B], p[B, C] = 5 / 6, 1 / 6
    p[C, C], p[C, D] = 0.8, 0.2
    p[D, D], p[D, A], p[D, E] = 0.875, 0.125 * 0.7, 0.125 * 0.3
    p[E, E], p[E, A] = 0.975, 0.025
    p[D, D] = 1.0 - p[D, A] - p[D, E]
    initial = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    return HmmModel(COUGH_TOPOLOGY, p, EmissionModel(mode, means, stds), initial)


# ---------------------------------------------------------------- persistence


def model_to_dict(model: HmmModel) -> dict:
    em = model.emissions
    emissions = {
        name: [
            {"channel": ch, "family": em.family, "mean": float(em.means[s, c]), "std": float(em.stds[s, c])}
            for c, ch in enumerate(em.mode.channels)
        ]
        for s, name in enumerate(STATE_NAMES)
    }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "states": list(STATE_NAMES),
        "mode": em.mode.value,
        "energy_floor": em.energy_floor,
        "topology": model.topology.allowed.tolist(),
        "transitions": model.transitions.tolist(),
        "initial": model.initial.tolist(),
        "emissions": emissions,
        "features": {
            "bin_duration_s": model.bin_duration_s,
            "band_edges_hz": [list(b) for b in model.band_edges_hz] if model.band_edges_hz is not None else None,
        },
    }


def model_from_dict(doc: dict) -> HmmModel:
    try:
        if doc.get("format") != MODEL_FORMAT:
            raise ModelError(f"not a {MODEL_FORMAT} document (format={doc.get('format')!r})")
        if doc.get("version") != MODEL_VERSION:
            raise ModelError(f"unsupported model version {doc.get('version')!r}")
        if list(doc["states"]) != list(STATE_NAMES):
            raise ModelError(f"states must be {list(STATE_NAMES)}, got {doc['states']}")
        mode = Mode(doc["mode"])
        topology = Topology(np.array(doc["topology"], dtype=bool))
        means = np.empty((N_STATES, len(mode.channels)))
        stds = np.empty_like(means)
        family = FAMILY
        for s, name in enumerate(STATE_NAMES):
            dens = doc["emissions"][name]
            if [d["channel"] for d in dens] != list(mode.channels):
                raise ModelError(f"state {name}: channels must be {list(mode.channels)}")
            for c, d in enumerate(dens):
                family = d["family"]
                if family != FAMILY:
                    raise ModelError(f"state {name}: unsupported density family {family!r}")
                means[s, c] = float(d["mean"])
                stds[s, c] = float(d["std"])
        em = EmissionModel(mode, means, stds, float(doc["energy_floor"]), family)
        feats = doc.get("features") or {}
        bands = feats.get("band_edges_hz")
        return HmmModel(
            topology,
            np.array(doc["transitions"], dtype=np.float64),
            em,
            np.array(doc["initial"], dtype=np.float64),
            feats.get("bin_duration_s"),
            tuple(tuple(b) for b in bands) if bands is not None else None,
        )
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"invalid model document: {exc!r}") from exc


def save_model(model: HmmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> HmmModel:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return model_from_dict(doc)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from exc
