"""Low-level audio utilities: strict WAV I/O, downmix, resampling, RMS.

Only PCM 16-bit, PCM 24-bit and IEEE float32 WAV files are accepted; other
encodings are rejected so that decoding behavior is fully specified.
"""

import math
import struct

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

PIPELINE_SAMPLE_RATE = 16_000


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file into a float32 array in [-1, 1].

    Returns (samples, sample_rate); samples has shape (n,) for mono or
    (n, channels) otherwise. Raises DataError for unsupported encodings,
    malformed headers, or zero-length audio.
    """
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise DataError(f"{path}: not a RIFF/WAVE file")
        fmt = None
        data = None
        while True:
            chunk_header = fh.read(8)
            if len(chunk_header) < 8:
                break
            chunk_id, size = struct.unpack("<4sI", chunk_header)
            payload = fh.read(size)
            if len(payload) < size:
                raise DataError(f"{path}: truncated chunk {chunk_id!r}")
            if size % 2:  # chunks are word-aligned
                fh.read(1)
            if chunk_id == b"fmt ":
                fmt = payload
            elif chunk_id == b"data":
                data = payload
            if fmt is not None and data is not None:
                break
    if fmt is None or data is None:
        raise DataError(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if channels < 1 or rate < 1:
        raise DataError(f"{path}: invalid WAV header")

    if tag == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float32) / 32768.0
    elif tag == 1 and bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8)
        raw = raw[: (len(raw) // 3) * 3].reshape(-1, 3)
        vals = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        vals = (vals ^ 0x800000) - 0x800000  # sign-extend 24-bit
        samples = vals.astype(np.float32) / 8388608.0
    elif tag == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raise DataError(
            f"{path}: unsupported WAV encoding (format tag {tag}, {bits}-bit); "
            "PCM 16/24-bit or float32 required"
        )

    samples = samples[: (len(samples) // channels) * channels]
    if channels > 1:
        samples = samples.reshape(-1, channels)
    if samples.shape[0] == 0:
        raise DataError(f"{path}: zero-length audio")
    return samples, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float32 WAV."""
    wavfile.write(path, sample_rate, np.asarray(samples, dtype=np.float32))


def downmix_mono(samples: np.ndarray) -> np.ndarray:
    """Mean of channels; identity for already-mono input."""
    if samples.ndim == 1:
        return samples
    return samples.mean(axis=1, dtype=np.float64).astype(np.float32)


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling between integer rates."""
    if rate_in == rate_out:
        return np.asarray(samples, dtype=np.float32)
    g = math.gcd(rate_in, rate_out)
    out = resample_poly(np.asarray(samples, dtype=np.float64), rate_out // g, rate_in // g)
    return out.astype(np.float32)


def peak_normalize_mix(mix: np.ndarray) -> np.ndarray:
    """Scale by 1/peak only when |peak| exceeds full scale."""
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if peak > 1.0:
        return (mix / peak).astype(np.float32)
    return np.asarray(mix, dtype=np.float32)


def rms(frame: np.ndarray) -> float:
    if frame.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.square(frame, dtype=np.float64))))
