import numpy as np
import pytest
from numpy.testing import assert_allclose

from audio_adherence.embedding import (
    AudioWindow,
    EmbedderSpec,
    builtin_embed,
    embed_window,
    get_embedder,
)
from audio_adherence.errors import ConfigError, DataError

RATE = 16_000
WINDOW = 80_000


def make_window(samples):
    return AudioWindow(samples=np.asarray(samples, dtype=np.float32), sample_rate=RATE)


def test_zero_window_fixed_silence_vector(embedder):
    zero = make_window(np.zeros(WINDOW))
    first = embed_window(zero, embedder)
    second = embed_window(zero, embedder)
    assert np.array_equal(first, second)
    # means at the log floor, zero spread, zero motion
    assert_allclose(first[:64], np.log(1e-8), atol=1e-5)
    assert_allclose(first[64:128], 0.0, atol=1e-9)
    assert_allclose(first[128:], 0.0, atol=1e-9)


def test_determinism_bit_identical(embedder, sine_window):
    w = make_window(sine_window)
    assert np.array_equal(embed_window(w, embedder), embed_window(w, embedder))


def test_dimension_contract(embedder, sine_window):
    vec = embed_window(make_window(sine_window), embedder)
    assert vec.shape == (embedder.spec.dim,) == (192,)


def _reference_mel_band_energies(freq_hz):
    """Independent oracle: test-local filterbank on the analytic spectrum.

    A sine at an exact bin frequency, windowed by the periodic Hann, has
    spectral magnitude N/4 at its bin and N/8 at the two neighbors.
    """
    n_fft = 400
    bin_width = RATE / n_fft  # 40 Hz
    k = freq_hz / bin_width
    assert abs(k - round(k)) < 1e-9, "oracle requires an exact-bin frequency"
    k = int(round(k))
    power = np.zeros(n_fft // 2 + 1)
    power[k] = (n_fft / 4) ** 2
    power[k - 1] = power[k + 1] = (n_fft / 8) ** 2

    def to_mel(hz):
        return 2595.0 * np.log10(1.0 + hz / 700.0)

    def to_hz(mel):
        return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)

    points = to_hz(np.linspace(to_mel(0.0), to_mel(RATE / 2), 66))
    freqs = np.arange(n_fft // 2 + 1) * bin_width
    energies = np.zeros(64)
    for band in range(64):
        lo, center, hi = points[band : band + 3]
        weights = np.maximum(
            0.0, np.minimum((freqs - lo) / (center - lo), (hi - freqs) / (hi - center))
        )
        energies[band] = weights @ power
    return energies


def test_sine_peaks_in_expected_mel_band(embedder, sine_window):
    vec = embed_window(make_window(sine_window), embedder)
    expected_band = int(np.argmax(_reference_mel_band_energies(440.0)))
    assert int(np.argmax(vec[:64])) == expected_band


def test_noise_and_tone_distinct(embedder, sine_window):
    noise = np.random.default_rng(1).uniform(-0.5, 0.5, WINDOW).astype(np.float32)
    v_noise = embed_window(make_window(noise), embedder)
    v_tone = embed_window(make_window(sine_window), embedder)
    assert np.linalg.norm(v_noise - v_tone) > 0


def test_feature_order_and_frame_permutation(embedder, sine_window):
    """Features are (means, stds, diffs); shuffling frames moves only diffs."""
    # modulate so frames differ and diffs are non-trivial
    t = np.arange(WINDOW) / RATE
    w = (sine_window * (0.5 + 0.5 * np.sin(2 * np.pi * 1.3 * t))).astype(np.float32)
    frames = embedder.log_mel_frames(w)
    vec = embed_window(make_window(w), embedder)

    means = frames.mean(axis=0, dtype=np.float64)
    stds = frames.std(axis=0, dtype=np.float64)
    diffs = np.abs(np.diff(frames, axis=0)).mean(axis=0, dtype=np.float64)
    assert_allclose(vec[:64], means, rtol=1e-9, atol=1e-9)
    # the embedder accumulates variance in a single pass; tiny bands differ
    # from the two-pass oracle only at the 1e-8 absolute level
    assert_allclose(vec[64:128], stds, rtol=1e-6, atol=1e-6)
    assert_allclose(vec[128:], diffs, rtol=1e-9, atol=1e-9)

    perm = np.random.default_rng(0).permutation(frames.shape[0])
    shuffled = frames[perm]
    assert_allclose(shuffled.mean(axis=0, dtype=np.float64), means, rtol=1e-9)
    assert np.max(np.abs(
        np.abs(np.diff(shuffled, axis=0)).mean(axis=0, dtype=np.float64) - diffs
    )) > 1e-6


def test_sample_rate_mismatch_rejected(embedder):
    bad = AudioWindow(samples=np.zeros(44_100, dtype=np.float32), sample_rate=44_100)
    with pytest.raises(DataError, match="sample rate"):
        embed_window(bad, embedder)


def test_non_finite_rejected(embedder):
    samples = np.zeros(WINDOW, dtype=np.float32)
    samples[7] = np.nan
    with pytest.raises(DataError, match="finite"):
        embed_window(make_window(samples), embedder)


def test_window_too_short(embedder):
    with pytest.raises(DataError, match="too short"):
        embed_window(make_window(np.zeros(100)), embedder)


def test_builtin_embed_helper(sine_window):
    vec = builtin_embed(make_window(sine_window))
    assert vec.shape == (192,)


def test_batch_matches_single_calls(embedder):
    rng = np.random.default_rng(5)
    windows = rng.uniform(-0.5, 0.5, size=(33, WINDOW)).astype(np.float32)
    batch = embedder.embed_batch(windows)
    for i in (0, 16, 32):
        single = embed_window(make_window(windows[i]), embedder)
        assert_allclose(batch[i], single, rtol=1e-5, atol=1e-7)


def test_pretrained_spec_dims_validated():
    EmbedderSpec(backend_id="vggish", dim=128)  # consistent
    with pytest.raises(ConfigError):
        EmbedderSpec(backend_id="vggish", dim=512)
    with pytest.raises(ConfigError):
        EmbedderSpec(backend_id="openl3", dim=128)


def test_get_embedder_errors():
    with pytest.raises(ConfigError, match="external extractor"):
        get_embedder("clap1")
    with pytest.raises(ConfigError, match="unknown"):
        get_embedder("definitely-not-a-backend")
