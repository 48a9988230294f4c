"""Loading RIFF/WAVE files into normalized mono clips."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile


class AudioError(ValueError):
    """Base class for audio decoding failures."""


class AudioReadError(AudioError):
    """The file is missing, unreadable or not a RIFF/WAVE container."""


class UnsupportedEncodingError(AudioError):
    """The WAVE file uses a compressed or otherwise unsupported sample format."""


class EmptyAudioError(AudioError):
    """The data chunk holds no samples."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if samples.size == 0:
            raise EmptyAudioError("AudioClip needs at least one sample")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.abs(samples) <= 1.0):
            raise ValueError("samples must lie in [-1, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))


def _to_unit_range(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-aligns 24-bit samples in int32, so both widths share the scale
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.int64:
        return data.astype(np.float64) / 9223372036854775808.0
    if np.issubdtype(data.dtype, np.floating):
        return np.clip(data.astype(np.float64), -1.0, 1.0)
    raise UnsupportedEncodingError(f"unsupported sample type {data.dtype}")


def load_wav(path) -> AudioClip:
    """Read a PCM or IEEE-float WAVE file as a mono clip in [-1, 1].

    Integer samples are divided by the largest magnitude of their type and
    multi-channel frames are averaged.
    """
    path = os.fspath(path)
    try:
        rate, data = wavfile.read(path)
    except OSError as exc:
        raise AudioReadError(f"{path}: cannot read file ({exc})") from exc
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported" in msg or "not supported" in msg:
            raise UnsupportedEncodingError(f"{path}: {msg}") from exc
        raise AudioReadError(f"{path}: {msg}") from exc
    if data.size == 0:
        raise EmptyAudioError(f"{path}: data chunk is empty")
    samples = _to_unit_range(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples, int(rate), os.path.basename(path))


def write_wav(path, samples, sample_rate_hz: int, bits: int = 16) -> None:
    """Write mono or ``(frames, channels)`` float samples as integer PCM or float32.

    Uses the same ``2**(bits - 1)`` scale as :func:`load_wav`, so a round trip
    is exact to half a quantisation step (a full step at +1.0).
    """
    samples = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    if bits == 16:
        data = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    elif bits == 32:
        data = np.clip(np.round(samples * 2147483648.0), -2147483648, 2147483647).astype(np.int32)
    elif bits == 8:
        data = np.clip(np.round(samples * 128.0 + 128.0), 0, 255).astype(np.uint8)
    elif bits == -32:
        data = samples.astype(np.float32)
    else:
        raise ValueError(f"unsupported bit depth {bits}; use 8, 16, 32 or -32 for float")
    wavfile.write(os.fspath(path), int(sample_rate_hz), data)


def duration_seconds(clip: AudioClip) -> float:
    return clip.samples.size / clip.sample_rate_hz
