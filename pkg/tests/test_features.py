import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foascene.features import (
    LOG_FLOOR, FeatureConfig, extract_features, frame_count, intensity_vectors, mel_filterbank,
    mel_spectrogram, read_features, stft, write_features,
)
from foascene.rir import encode_foa
from foascene.zones import angles_to_vector

FS = 16000
N = 512


def _bin_sine(k, seconds=0.5):
    t = np.arange(int(seconds * FS))
    return np.sin(2 * np.pi * k * t / N)


def _plane_wave(azimuth_deg, elevation_deg=0.0, seconds=1.0, seed=0):
    s = np.random.default_rng(seed).standard_normal(int(seconds * FS))
    return encode_foa(angles_to_vector(azimuth_deg, elevation_deg))[:, None] * s[None]


def test_bin_center_sine_in_single_bin():
    # A Hann window puts 2/3 of a bin-centred sine in that bin and 1/6 in each
    # neighbour, so this example cannot hold as written (see the decisions ledger).
    spec = stft(_bin_sine(40), N, 160)
    power = np.abs(spec[2]) ** 2
    assert power[40] / power.sum() > 0.99


def test_bin_center_sine_in_hann_mainlobe():
    spec = stft(_bin_sine(40), N, 160)
    for frame in np.abs(spec[1:-2]) ** 2:
        assert int(np.argmax(frame)) == 40
        assert frame[39:42].sum() / frame.sum() > 0.99
        assert frame[40] / frame.sum() == pytest.approx(2 / 3, abs=1e-3)


def test_zeros_give_zero_spectrogram():
    assert not np.any(stft(np.zeros(4000), N, 160))


@given(st.integers(0, 2**32 - 1))
def test_parseval_per_frame(seed):
    x = np.random.default_rng(seed).standard_normal(N)
    from foascene.features import _window

    spec = stft(x, N, 160)[0]
    time_energy = np.sum((x * _window(N, N)) ** 2)
    freq_energy = (np.abs(spec[0]) ** 2 + 2 * np.sum(np.abs(spec[1:-1]) ** 2) + np.abs(spec[-1]) ** 2) / N
    assert freq_energy == pytest.approx(time_energy, rel=1e-6)


@pytest.mark.parametrize("window_len", [0, 400, 513, -512])
def test_window_must_be_power_of_two(window_len):
    with pytest.raises(ValueError):
        stft(np.zeros(1000), window_len, 160)


def test_hop_must_not_exceed_window():
    with pytest.raises(ValueError):
        stft(np.zeros(1000), 256, 300)


def test_short_input_gives_one_padded_frame():
    spec = stft(np.ones(100), N, 160)
    assert spec.shape == (1, N // 2 + 1)


@given(st.integers(1, 20000), st.sampled_from([256, 512, 1024]), st.integers(1, 256))
def test_frame_count_formula(n, window_len, hop):
    spec = stft(np.zeros(n), window_len, hop)
    expected = 1 if n <= window_len else math.ceil((n - window_len) / hop) + 1
    assert spec.shape[0] == frame_count(n, window_len, hop) == expected


def test_white_noise_mel_is_flat():
    x = np.random.default_rng(3).standard_normal(4 * FS)
    mel = mel_spectrogram(stft(x, N, 160), FS, 64).mean(axis=0)
    assert mel.max() - mel.min() <= 6.0


def test_silence_mel_is_the_floor():
    mel = mel_spectrogram(stft(np.zeros(FS), N, 160), FS, 64)
    assert np.all(mel == 10 * np.log10(LOG_FLOOR))


@pytest.mark.parametrize("mel_bins", [8, 40, 64, 128])
def test_filterbank_columns_sum_to_at_most_one(mel_bins):
    fb = mel_filterbank(FS, N, mel_bins)
    assert fb.shape == (mel_bins, N // 2 + 1)
    assert np.all(fb >= 0) and np.all(fb.sum(axis=0) <= 1.0 + 1e-12)


def test_too_few_mel_bins():
    with pytest.raises(ValueError):
        mel_filterbank(FS, N, 7)


def test_plane_wave_from_front():
    spec = stft(_plane_wave(0.0), N, 160)
    iv = intensity_vectors(*spec)
    expected = 3 * math.sqrt(2) / 5  # sqrt(2)|W|^2 / (|W|^2 + 2|W|^2 / 3)
    np.testing.assert_allclose(iv[0], expected, atol=1e-6)
    np.testing.assert_allclose(iv[1:], 0.0, atol=1e-6)
    assert np.all(iv[0] > 0)


def test_w_only_gives_zero_intensity():
    foa = np.zeros((4, FS))
    foa[0] = np.random.default_rng(1).standard_normal(FS)
    assert not np.any(intensity_vectors(*stft(foa, N, 160)))


def test_source_from_negative_y():
    iv = intensity_vectors(*stft(_plane_wave(-90.0), N, 160))
    assert np.all(iv[1] < 0)
    np.testing.assert_allclose(iv[0], 0.0, atol=1e-6)


@given(st.floats(-180, 180), st.floats(-89, 89))
def test_mirror_negates_iv_y(azimuth, elevation):
    foa = _plane_wave(azimuth, elevation, seconds=0.2)
    mirrored = foa * np.array([1, 1, -1, 1])[:, None]
    a = intensity_vectors(*stft(foa, N, 160))
    b = intensity_vectors(*stft(mirrored, N, 160))
    np.testing.assert_array_equal(b[1], -a[1])
    np.testing.assert_array_equal(b[[0, 2]], a[[0, 2]])


@given(st.floats(-180, 180), st.floats(-85, 85))
def test_energy_weighted_iv_direction(azimuth, elevation):
    from foascene.features import bin_intensity

    iv, energy = bin_intensity(*stft(_plane_wave(azimuth, elevation, seconds=0.2), N, 160))
    mean = (iv * energy).sum(axis=(1, 2))
    cosine = mean @ angles_to_vector(azimuth, elevation) / np.linalg.norm(mean)
    assert math.degrees(math.acos(min(1.0, cosine))) <= 5.0


def test_iv_maps_are_bounded():
    rng = np.random.default_rng(5)
    stack = extract_features(rng.standard_normal((4, FS)))
    for name in ("iv_x", "iv_y", "iv_z"):
        assert np.all(np.abs(getattr(stack, name)) <= 1.0)


def test_feature_stack_shape():
    config = FeatureConfig()
    stack = extract_features(np.zeros((4, 12345)), config)
    frames = math.ceil((12345 - config.n_fft) / config.hop) + 1
    assert stack.as_array().shape == (7, frames, 64)
    assert stack.frame_rate_hz == 100.0
    with pytest.raises(ValueError):
        extract_features(np.zeros((2, 100)))


def test_container_round_trip(tmp_path):
    stack = extract_features(_plane_wave(30.0, 10.0))
    write_features(tmp_path / "f.bin", stack)
    back = read_features(tmp_path / "f.bin")
    np.testing.assert_array_equal(back.as_array(), stack.as_array().astype(np.float32))
    assert back.frame_rate_hz == stack.frame_rate_hz and back.mel_bins == stack.mel_bins


def test_container_rejects_corruption(tmp_path):
    write_features(tmp_path / "f.bin", extract_features(np.zeros((4, 2000))))
    blob = (tmp_path / "f.bin").read_bytes()
    (tmp_path / "short.bin").write_bytes(blob[:-4])
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + blob[4:])
    (tmp_path / "tiny.bin").write_bytes(blob[:5])
    for name in ("short.bin", "magic.bin", "tiny.bin"):
        with pytest.raises(ValueError):
            read_features(tmp_path / name)
