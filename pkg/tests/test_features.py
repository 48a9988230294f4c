import numpy as np
import pytest

from coughhmm.audio import AudioClip
from coughhmm.features import (
    FeatureSeries,
    export_features_csv,
    export_spectrogram_csv,
    extract_features,
    import_features_csv,
    spectrogram,
)
from conftest import direct_dft_band_energies


def tone(freq, rate, seconds=0.1, amp=1.0):
    t = np.arange(int(rate * seconds)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


@pytest.mark.parametrize("rate", [8000, 16000, 44100, 48000])
def test_silence_is_zero(rate):
    s = extract_features(AudioClip(np.zeros(rate // 5), rate))
    assert not s.energies.any()


def test_bin_partition_and_times():
    clip = AudioClip(np.zeros(44100 + 500), 44100)
    s = extract_features(clip)
    n = int(0.025 * 44100)
    assert n == 1102
    assert len(s) == (44100 + 500) // n
    np.testing.assert_allclose(s.t_mid_s, (np.arange(len(s)) + 0.5) * 0.025)
    assert s[3].t_mid_s == pytest.approx(0.0875)


@pytest.mark.parametrize("freq, band", [(1000, 0), (3000, 1), (6000, 2)])
def test_tone_matches_direct_dft(freq, band):
    clip = tone(freq, 44100, seconds=0.05)
    s = extract_features(clip)
    for b in range(len(s)):
        frame = clip.samples[b * 1102 : (b + 1) * 1102]
        expected, total = direct_dft_band_energies(frame, 44100)
        np.testing.assert_allclose(s.energies[b], expected, rtol=1e-9, atol=1e-9 * total)
        assert s.energies[b, band] / s.e_total[b] >= 0.99


def test_bin_centred_tone_has_no_leakage():
    # 40 kHz, 25 ms -> 1000-sample bins with 40 Hz resolution; 1000 Hz is exactly bin 25
    s = extract_features(tone(1000, 40000))
    assert np.all(s.e_low > 0)
    assert np.all(s.e_mid <= 1e-9 * s.e_low)
    assert np.all(s.e_high <= 1e-9 * s.e_low)


def test_parseval_and_cap(rng):
    for rate in (16000, 44100, 96000):
        clip = AudioClip(rng.uniform(-1, 1, rate // 10), rate)
        s = extract_features(clip)
        n = int(round(0.025 * rate))
        frames = clip.samples[: len(s) * n].reshape(len(s), n)
        power = np.sum(frames**2, axis=1)  # Parseval: sum |X_k|^2 / N == sum x^2
        if rate / 2 <= 22000:
            np.testing.assert_allclose(s.e_total, power, rtol=1e-9)
        else:
            assert np.all(s.e_total < power)


def test_scaling(rng):
    clip = AudioClip(rng.uniform(-0.3, 0.3, 4410), 44100)
    c = 2.7
    a = extract_features(clip).energies
    b = extract_features(AudioClip(clip.samples * c, 44100)).energies
    np.testing.assert_allclose(b, c**2 * a, rtol=1e-9)


def test_low_rate_leaves_high_band_empty(rng):
    s = extract_features(AudioClip(rng.uniform(-1, 1, 1600), 6000))
    assert not s.e_high.any()


def test_errors():
    with pytest.raises(ValueError):
        extract_features(AudioClip(np.zeros(100), 44100))
    with pytest.raises(ValueError):
        extract_features(AudioClip(np.zeros(4410), 44100), bin_duration_s=0)
    with pytest.raises(ValueError):
        extract_features(AudioClip(np.zeros(4410), 44100), band_edges_hz=((0, 2000), (1000, 4000), (4000, 22000)))
    with pytest.raises(ValueError):
        extract_features(AudioClip(np.zeros(4410), 44100), band_edges_hz=((0, 2000), (4000, 4000), (4000, 22000)))


def test_csv_roundtrip(tmp_path, rng):
    s = FeatureSeries(np.exp(rng.normal(0, 5, (2, 3))), 0.025, "x")
    export_features_csv(s, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == "t_mid_s,e_low,e_mid,e_high"
    back = import_features_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.energies, s.energies)
    np.testing.assert_array_equal(back.t_mid_s, s.t_mid_s)
    assert back.bin_duration_s == s.bin_duration_s


def test_spectrogram_export(tmp_path):
    zero = AudioClip(np.zeros(4410), 44100)
    export_spectrogram_csv(zero, 0.025, tmp_path / "z.csv")
    rows = np.loadtxt(tmp_path / "z.csv", delimiter=",", skiprows=1)
    assert rows.shape[0] == len(extract_features(zero))
    assert not rows[:, 1:].any()

    clip = tone(1000, 40000)
    freqs, power = spectrogram(clip)
    assert power.shape[0] == len(extract_features(clip))
    for row in power:
        order = np.argsort(row)[::-1]
        assert freqs[order[0]] == 1000.0
        assert row[order[1]] < 1e-9 * row[order[0]]
    # folded one-sided power carries the whole bin energy
    np.testing.assert_allclose(power.sum(axis=1), extract_features(clip).e_total, rtol=1e-9)
    header = open(tmp_path / "z.csv").readline().strip().split(",")
    assert header[0] == "t_mid_s" and float(header[1]) == 0.0


def test_feature_vector_total():
    s = FeatureSeries(np.array([[1.0, 2.0, 4.0]]))
    v = s[0]
    assert v.e_total == 7.0
    assert s.vectors == [v]
    with pytest.raises(ValueError):
        FeatureSeries(np.array([[-1.0, 0.0, 0.0]]))
