"""
From a WAV file to band-energy features
=======================================

Builds a short synthetic recording (two noisy "coughs" in a quiet room),
writes it as 16-bit PCM, then loads it back and computes the 25 ms
low/mid/high band energies.
"""

import tempfile
from pathlib import Path

import numpy as np

from coughhmm import export_features_csv, export_spectrogram_csv, extract_features, load_wav, write_wav

rate = 44100
rng = np.random.default_rng(0)
t = np.arange(2 * rate) / rate

# Background hiss plus two decaying broadband bursts
signal = 0.002 * rng.standard_normal(t.size)
for onset in (0.4, 1.1):
    burst = (t >= onset) & (t < onset + 0.3)
    envelope = np.exp(-(t[burst] - onset) / 0.08)
    signal[burst] += 0.5 * envelope * rng.standard_normal(burst.sum())

out = Path(tempfile.mkdtemp())
write_wav(out / "two_coughs.wav", signal, rate)

clip = load_wav(out / "two_coughs.wav")
print(f"{clip.source_id}: {clip.samples.size} samples at {clip.sample_rate_hz} Hz")

features = extract_features(clip)  # 25 ms bins, bands 0-2k, 2-4k, 4-22k Hz
print(f"{len(features)} bins of {features.bin_duration_s * 1000:.0f} ms")

# Energies span several orders of magnitude between bursts and silence
loud = np.argmax(features.e_total)
quiet = np.argmin(features.e_total)
print("loudest bin", features[loud])
print("quietest bin", features[quiet])

export_features_csv(features, out / "two_coughs.features.csv")
export_spectrogram_csv(clip, 0.025, out / "two_coughs.spectrogram.csv")
print("wrote CSVs to", out)
