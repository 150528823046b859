"""Per-model audio preprocessing.

Each backend follows its model family's published input pipeline: VGGish
consumes 16 kHz log-mel patches; OpenL3 a 256-band mel spectrogram of
48 kHz audio; CLAP a 64-band log-mel of 48 kHz audio. Window WAVs from the
scoring pipeline's cache arrive at whatever rate the cache was written
with (16 kHz by default) and are resampled here.
"""

import math
import struct

import numpy as np
from scipy.signal import resample_poly


def read_wav_mono(path) -> tuple[np.ndarray, int]:
    """Minimal WAV reader: PCM16/24 or float32, downmixed to mono."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise ValueError(f"{path}: not a WAV file")
        fmt = data = None
        while fmt is None or data is None:
            chunk = fh.read(8)
            if len(chunk) < 8:
                raise ValueError(f"{path}: missing fmt/data chunk")
            cid, size = struct.unpack("<4sI", chunk)
            payload = fh.read(size)
            if size % 2:
                fh.read(1)
            if cid == b"fmt ":
                fmt = payload
            elif cid == b"data":
                data = payload
    tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float32) / 32768.0
    elif tag == 1 and bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8)
        raw = raw[: len(raw) // 3 * 3].reshape(-1, 3)
        vals = (raw[:, 0].astype(np.int32) | (raw[:, 1].astype(np.int32) << 8)
                | (raw[:, 2].astype(np.int32) << 16))
        vals = (vals ^ 0x800000) - 0x800000
        samples = vals.astype(np.float32) / 8388608.0
    elif tag == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raise ValueError(f"{path}: unsupported WAV encoding (tag {tag}, {bits}-bit)")
    if channels > 1:
        samples = samples[: len(samples) // channels * channels]
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples.astype(np.float32), rate


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    if rate_in == rate_out:
        return samples
    g = math.gcd(rate_in, rate_out)
    return resample_poly(samples.astype(np.float64), rate_out // g, rate_in // g).astype(np.float32)


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_bands, n_fft, rate, fmin, fmax):
    points = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2))
    freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    bank = np.zeros((n_bands, len(freqs)))
    for b in range(n_bands):
        lo, mid, hi = points[b : b + 3]
        bank[b] = np.maximum(0.0, np.minimum((freqs - lo) / (mid - lo),
                                             (hi - freqs) / (hi - mid)))
    return bank.astype(np.float32)


def stft_power(samples, n_fft, hop, win_length=None):
    win_length = win_length or n_fft
    window = np.hanning(win_length).astype(np.float32)
    n_frames = max(1, 1 + (len(samples) - win_length) // hop)
    frames = np.lib.stride_tricks.as_strided(
        samples,
        shape=(n_frames, win_length),
        strides=(samples.strides[0] * hop, samples.strides[0]),
    )
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)
    return (spec.real**2 + spec.imag**2).astype(np.float32)


def logmel(samples, rate, n_mels, n_fft, hop, fmin, fmax, floor=1e-10):
    power = stft_power(samples, n_fft, hop)
    bank = mel_filterbank(n_mels, n_fft, rate, fmin, fmax)
    return np.log(power @ bank.T + floor)


def vggish_patches(samples: np.ndarray, rate: int) -> np.ndarray:
    """0.96 s log-mel patches, (n_patches, 96, 64), 16 kHz input."""
    x = resample(samples, rate, 16_000)
    mel = logmel(x, 16_000, n_mels=64, n_fft=512, hop=160, fmin=125, fmax=7500,
                 floor=0.01)
    n_patches = len(mel) // 96
    if n_patches == 0:  # pad short inputs to one patch
        mel = np.pad(mel, ((0, 96 - len(mel)), (0, 0)))
        n_patches = 1
    return mel[: n_patches * 96].reshape(n_patches, 96, 64)


def openl3_frames(samples: np.ndarray, rate: int, hop_seconds: float = 1.0) -> np.ndarray:
    """1 s mel-256 spectrogram frames, (n_frames, 256, t), 48 kHz input."""
    x = resample(samples, rate, 48_000)
    frames = []
    step = int(hop_seconds * 48_000)
    for start in range(0, max(len(x) - 48_000, 0) + 1, step):
        chunk = x[start : start + 48_000]
        if len(chunk) < 48_000:
            chunk = np.pad(chunk, (0, 48_000 - len(chunk)))
        mel = logmel(chunk, 48_000, n_mels=256, n_fft=2048, hop=242,
                     fmin=0, fmax=24_000)
        frames.append(mel.T)  # (256, t)
    return np.stack(frames)


def clap_logmel(samples: np.ndarray, rate: int) -> np.ndarray:
    """64-band log-mel of the full window at 48 kHz, (1, n_frames, 64)."""
    x = resample(samples, rate, 48_000)
    mel = logmel(x, 48_000, n_mels=64, n_fft=1024, hop=480, fmin=50, fmax=14_000)
    return mel[None, :, :]
