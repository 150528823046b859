"""Embedding backends and the window-to-vector interface.

An embedder maps a mono audio window to a fixed-length vector. Pretrained
backends (vggish, openl3, clap0/1/2) run in an external extractor and enter
the pipeline as AEMB files; the built-in log-mel statistics embedder keeps
the whole pipeline self-contained and deterministic.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .aemb import EmbeddingMatrix, read_embeddings, write_embeddings  # noqa: F401
from .errors import ConfigError, DataError

BUILTIN_BACKEND = "builtin-logmel"

# Embedding dimensionalities of the supported external backends.
PRETRAINED_DIMS = {
    "vggish": 128,
    "openl3": 6144,
    "clap0": 512,
    "clap1": 512,
    "clap2": 128,
}

_MEL_BANDS = 64
_FRAME_SECONDS = 0.025
_HOP_SECONDS = 0.010
_LOG_FLOOR = 1e-8
_CHUNK = 16  # windows per pass; keeps post-FFT stages cache-resident


@dataclass
class AudioWindow:
    """A mono audio window: float samples in [-1, 1] plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise DataError(f"window must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")

    def validate(self) -> None:
        if not np.isfinite(self.samples).all():
            raise DataError("window contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class EmbedderSpec:
    """Declares a backend's identity, dimensionality and input contract."""

    backend_id: str
    dim: int
    window_seconds: float = 5.0
    sample_rate: int = 16_000

    def __post_init__(self):
        expected = PRETRAINED_DIMS.get(self.backend_id)
        if expected is not None and self.dim != expected:
            raise ConfigError(
                f"backend {self.backend_id!r} produces {expected}-dim embeddings, "
                f"spec declares {self.dim}"
            )


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_bands: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank, (n_bands, n_fft//2 + 1), spanning 0..Nyquist."""
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_bands + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    weights = np.zeros((n_bands, n_fft // 2 + 1), dtype=np.float64)
    for band in range(n_bands):
        lo, center, hi = hz_points[band : band + 3]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        weights[band] = np.maximum(0.0, np.minimum(rising, falling))
    return weights.astype(np.float32)


class BuiltinLogMelEmbedder:
    """Deterministic spectral embedder: log-mel frame statistics.

    Per window: 64-band log-mel spectrogram (25 ms periodic-Hann frames,
    10 ms hop, power spectrum, log(x + 1e-8) floor), summarized as the
    per-band mean, standard deviation and mean first-difference magnitude,
    concatenated in that order -> 192 dimensions. Statistics accumulate in
    double precision; the spectrogram itself runs in float32.
    """

    def __init__(self):
        self.spec = EmbedderSpec(
            backend_id=BUILTIN_BACKEND,
            dim=3 * _MEL_BANDS,
            window_seconds=5.0,
            sample_rate=16_000,
        )
        rate = self.spec.sample_rate
        self._frame_len = int(round(_FRAME_SECONDS * rate))
        self._hop = int(round(_HOP_SECONDS * rate))
        n = self._frame_len
        self.window = (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)).astype(np.float32)
        self._filters = mel_filterbank(_MEL_BANDS, self._frame_len, rate)
        self._frame_buf = None  # reused per chunk; page faults are costly

    def log_mel_frames(self, samples: np.ndarray) -> np.ndarray:
        """(n_frames, 64) log-mel frames for one window."""
        return self._log_mel_chunk(np.ascontiguousarray(samples, dtype=np.float32)[None, :])[0]

    def _log_mel_chunk(self, chunk: np.ndarray) -> np.ndarray:
        n, length = chunk.shape
        if length < self._frame_len + self._hop:
            raise DataError(
                f"window too short for embedding: {length} samples, "
                f"need at least {self._frame_len + self._hop}"
            )
        n_frames = 1 + (length - self._frame_len) // self._hop
        strides = (chunk.strides[0], self._hop * chunk.strides[1], chunk.strides[1])
        frames = np.lib.stride_tricks.as_strided(
            chunk, shape=(n, n_frames, self._frame_len), strides=strides
        )
        if (self._frame_buf is None
                or self._frame_buf.shape[1:] != (n_frames, self._frame_len)
                or self._frame_buf.shape[0] < n):
            self._frame_buf = np.empty(
                (max(n, _CHUNK), n_frames, self._frame_len), dtype=np.float32
            )
        buf = self._frame_buf[:n]
        np.multiply(frames, self.window, out=buf)
        spectra = sfft.rfft(buf, axis=-1)
        power = np.square(spectra.real)
        power += np.square(spectra.imag)
        mel = power.reshape(-1, power.shape[-1]) @ self._filters.T
        logmel = np.log(mel + np.float32(_LOG_FLOOR))
        return logmel.reshape(n, n_frames, _MEL_BANDS)

    def embed_batch(self, windows: np.ndarray) -> np.ndarray:
        """Embed a stack of equal-length windows, (n, length) -> (n, 192)."""
        windows = np.ascontiguousarray(windows, dtype=np.float32)
        n = windows.shape[0]
        out = np.empty((n, 3 * _MEL_BANDS), dtype=np.float64)
        for start in range(0, n, _CHUNK):
            logmel = self._log_mel_chunk(windows[start : start + _CHUNK])
            n_frames = logmel.shape[1]
            means = logmel.mean(axis=1, dtype=np.float64)
            sq_means = np.einsum("nfb,nfb->nb", logmel, logmel, dtype=np.float64) / n_frames
            out[start : start + _CHUNK, :_MEL_BANDS] = means
            out[start : start + _CHUNK, _MEL_BANDS : 2 * _MEL_BANDS] = np.sqrt(
                np.maximum(sq_means - means**2, 0.0)
            )
            out[start : start + _CHUNK, 2 * _MEL_BANDS :] = np.abs(
                np.diff(logmel, axis=1)
            ).mean(axis=1, dtype=np.float64)
        return out

    def embed(self, window: AudioWindow) -> np.ndarray:
        return embed_window(window, self)


def get_embedder(backend_id: str) -> BuiltinLogMelEmbedder:
    if backend_id == BUILTIN_BACKEND:
        return BuiltinLogMelEmbedder()
    if backend_id in PRETRAINED_DIMS:
        raise ConfigError(
            f"backend {backend_id!r} is computed by the external extractor; "
            "pass its AEMB output instead (backend external:<path>)"
        )
    raise ConfigError(f"unknown embedding backend {backend_id!r}")


def embed_window(window: AudioWindow, embedder) -> np.ndarray:
    """Embed one window. Pure: identical input gives bit-identical output."""
    spec = embedder.spec
    if window.sample_rate != spec.sample_rate:
        raise DataError(
            f"sample rate mismatch: window {window.sample_rate} Hz, "
            f"embedder expects {spec.sample_rate} Hz"
        )
    window.validate()
    vec = embedder.embed_batch(window.samples[None, :])[0]
    if vec.shape[0] != spec.dim:
        raise DataError(
            f"embedder returned {vec.shape[0]} dims, spec declares {spec.dim}"
        )
    return vec


def builtin_embed(window: AudioWindow) -> np.ndarray:
    """Embed with the built-in log-mel statistics backend."""
    return embed_window(window, BuiltinLogMelEmbedder())
