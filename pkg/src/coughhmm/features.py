"""Binned band-energy features.

Each clip is cut into consecutive, non-overlapping bins (25 ms by default).
Per bin the power spectrum ``|X_k|^2 / N`` of a plain (rectangular) DFT is
summed over three frequency bands: low [0, 2000) Hz, mid [2000, 4000) Hz and
high [4000, 22000] Hz. Nothing above 22 kHz is counted.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .audio import AudioClip

BIN_DURATION_S = 0.025
MAX_FREQUENCY_HZ = 22000.0
BAND_EDGES_HZ = ((0.0, 2000.0), (2000.0, 4000.0), (4000.0, 22000.0))
FEATURE_COLUMNS = ("t_mid_s", "e_low", "e_mid", "e_high")

# bins per FFT batch; bounds peak memory on long recordings
_CHUNK_BINS = 2048


@dataclass(frozen=True)
class FeatureVector:
    t_mid_s: float
    e_low: float
    e_mid: float
    e_high: float

    @property
    def e_total(self) -> float:
        return self.e_low + self.e_mid + self.e_high


@dataclass(frozen=True)
class FeatureSeries:
    """Band energies of consecutive bins.

    ``energies`` has shape ``(n_bins, 3)`` with columns low, mid, high.
    """

    energies: np.ndarray
    bin_duration_s: float = BIN_DURATION_S
    source_id: str = ""
    sample_rate_hz: int | None = None

    def __post_init__(self):
        energies = np.array(self.energies, dtype=np.float64)
        if energies.ndim != 2 or energies.shape[1] != 3:
            raise ValueError(f"energies must have shape (n, 3), got {energies.shape}")
        if energies.shape[0] == 0:
            raise ValueError("a feature series needs at least one bin")
        if not self.bin_duration_s > 0:
            raise ValueError(f"bin duration must be positive, got {self.bin_duration_s}")
        if np.any(energies < 0) or not np.all(np.isfinite(energies)):
            raise ValueError("band energies must be finite and non-negative")
        energies.setflags(write=False)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "bin_duration_s", float(self.bin_duration_s))

    def __len__(self) -> int:
        return self.energies.shape[0]

    def __getitem__(self, k: int) -> FeatureVector:
        k = range(len(self))[k]
        low, mid, high = self.energies[k]
        return FeatureVector((k + 0.5) * self.bin_duration_s, float(low), float(mid), float(high))

    def __iter__(self) -> Iterator[FeatureVector]:
        return (self[k] for k in range(len(self)))

    @property
    def vectors(self) -> list[FeatureVector]:
        return list(self)

    @property
    def t_mid_s(self) -> np.ndarray:
        return (np.arange(len(self)) + 0.5) * self.bin_duration_s

    @property
    def e_low(self) -> np.ndarray:
        return self.energies[:, 0]

    @property
    def e_mid(self) -> np.ndarray:
        return self.energies[:, 1]

    @property
    def e_high(self) -> np.ndarray:
        return self.energies[:, 2]

    @property
    def e_total(self) -> np.ndarray:
        return self.energies[:, 0] + self.energies[:, 1] + self.energies[:, 2]

    def slice(self, start: int, stop: int) -> "FeatureSeries":
        """Bins ``start:stop``, re-timed so the first kept bin starts at zero."""
        return FeatureSeries(self.energies[start:stop], self.bin_duration_s, self.source_id, self.sample_rate_hz)


def _check_bands(band_edges_hz) -> tuple[tuple[float, float], ...]:
    bands = tuple((float(lo), float(hi)) for lo, hi in band_edges_hz)
    if len(bands) != 3:
        raise ValueError(f"expected three bands, got {len(bands)}")
    prev_hi = 0.0
    for lo, hi in bands:
        if lo < 0 or not lo < hi:
            raise ValueError(f"invalid band [{lo}, {hi}]")
        if lo < prev_hi:
            raise ValueError(f"bands overlap or are not ascending at {lo} Hz")
        prev_hi = hi
    return bands


def samples_per_bin(sample_rate_hz: int, bin_duration_s: float) -> int:
    # the epsilon guards products like 0.025 * 8000 = 199.99999999999997
    return int(np.floor(bin_duration_s * sample_rate_hz + 1e-9))


def _frames(clip: AudioClip, bin_duration_s: float) -> np.ndarray:
    if not bin_duration_s > 0:
        raise ValueError(f"bin duration must be positive, got {bin_duration_s}")
    n = samples_per_bin(clip.sample_rate_hz, bin_duration_s)
    if n < 1 or clip.samples.size < n:
        raise ValueError(
            f"clip of {clip.samples.size} samples is shorter than one {bin_duration_s} s bin "
            f"at {clip.sample_rate_hz} Hz"
        )
    n_bins = clip.samples.size // n
    return clip.samples[: n_bins * n].reshape(n_bins, n)


def band_masks(n: int, sample_rate_hz: int, band_edges_hz=BAND_EDGES_HZ) -> np.ndarray:
    """Boolean ``(3, n)`` masks selecting full-spectrum DFT indices per band.

    Index ``k`` is placed by its absolute centre frequency, so a negative
    frequency coefficient lands in the same band as its positive twin.
    """
    bands = _check_bands(band_edges_hz)
    freqs = np.abs(np.fft.fftfreq(n, d=1.0 / sample_rate_hz))
    below_cap = freqs <= MAX_FREQUENCY_HZ
    masks = []
    for i, (lo, hi) in enumerate(bands):
        upper = freqs <= hi if i == len(bands) - 1 else freqs < hi
        masks.append((freqs >= lo) & upper & below_cap)
    return np.array(masks)


def extract_features(
    clip: AudioClip,
    bin_duration_s: float = BIN_DURATION_S,
    band_edges_hz: Sequence[tuple[float, float]] = BAND_EDGES_HZ,
) -> FeatureSeries:
    """Compute low/mid/high band energies for every full bin of ``clip``.

    A trailing partial bin is dropped.
    """
    frames = _frames(clip, bin_duration_s)
    n = frames.shape[1]
    weights = band_masks(n, clip.sample_rate_hz, band_edges_hz).T.astype(np.float64)
    out = np.empty((frames.shape[0], 3))
    for start in range(0, frames.shape[0], _CHUNK_BINS):
        spectrum = np.fft.fft(frames[start : start + _CHUNK_BINS], axis=1)
        power = (spectrum.real**2 + spectrum.imag**2) / n
        out[start : start + _CHUNK_BINS] = power @ weights
    return FeatureSeries(out, bin_duration_s, clip.source_id, clip.sample_rate_hz)


def spectrogram(clip: AudioClip, bin_duration_s: float = BIN_DURATION_S) -> tuple[np.ndarray, np.ndarray]:
    """One-sided power per bin and frequency.

    Returns ``(freqs_hz, power)`` where ``power[b, k]`` is ``|X_k|^2 / N`` with
    the matching negative-frequency term folded in, so each row sums to the
    bin's total power.
    """
    frames = _frames(clip, bin_duration_s)
    n = frames.shape[1]
    freqs = np.fft.rfftfreq(n, d=1.0 / clip.sample_rate_hz)
    fold = np.full(freqs.size, 2.0)
    fold[0] = 1.0
    if n % 2 == 0:
        fold[-1] = 1.0
    power = np.empty((frames.shape[0], freqs.size))
    for start in range(0, frames.shape[0], _CHUNK_BINS):
        spectrum = np.fft.rfft(frames[start : start + _CHUNK_BINS], axis=1)
        power[start : start + _CHUNK_BINS] = fold * (spectrum.real**2 + spectrum.imag**2) / n
    return freqs, power


def export_features_csv(series: FeatureSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_COLUMNS)
        for t, (low, mid, high) in zip(series.t_mid_s, series.energies):
            writer.writerow([repr(float(t)), repr(float(low)), repr(float(mid)), repr(float(high))])


def import_features_csv(path, source_id: str | None = None) -> FeatureSeries:
    """Read a feature CSV written by :func:`export_features_csv`.

    The bin duration is recovered from the first mid-point time.
    """
    path = os.fspath(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FEATURE_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(FEATURE_COLUMNS)}, got {header}")
        times, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                values = [float(x) for x in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            times.append(values[0])
            rows.append(values[1:])
    if not rows:
        raise ValueError(f"{path}: no feature rows")
    bin_duration = 2.0 * times[0]
    expected = (np.arange(len(times)) + 0.5) * bin_duration
    if not np.allclose(times, expected, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{path}: t_mid_s is not evenly spaced from {times[0]}")
    return FeatureSeries(np.array(rows), bin_duration, source_id if source_id is not None else os.path.basename(path))


def export_spectrogram_csv(clip: AudioClip, bin_duration_s, path) -> None:
    freqs, power = spectrogram(clip, bin_duration_s)
    t_mid = (np.arange(power.shape[0]) + 0.5) * bin_duration_s
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_mid_s"] + [repr(float(f)) for f in freqs])
        for t, row in zip(t_mid, power):
            writer.writerow([repr(float(t))] + [repr(float(p)) for p in row])
