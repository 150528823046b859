"""Prompt/stem fusion: turn an audio pair into a single vector.

Three pipelines are supported. ``mix`` sums the waveforms before embedding
(early fusion); ``sum`` and ``conc`` combine separately computed embeddings
(late fusion). The projection always runs after fusion, so for ``conc`` it
is fitted on concatenated vectors.
"""

import numpy as np

from .embedding import AudioWindow, embed_window
from .errors import ConfigError, DataError
from .projection import Projection, apply_projection

FUSION_METHODS = ("mix", "sum", "conc")


def validate_fusion(method: str) -> str:
    if method not in FUSION_METHODS:
        raise ConfigError(f"unknown fusion method {method!r}; expected one of {FUSION_METHODS}")
    return method


def fused_dim(method: str, embedding_dim: int) -> int:
    """conc doubles the embedding dimensionality; mix and sum preserve it."""
    return 2 * embedding_dim if method == "conc" else embedding_dim


def mix_waveforms(prompt: np.ndarray, stem: np.ndarray, mix_gain: float = 1.0) -> np.ndarray:
    """Samplewise sum scaled by mix_gain, rescaled by 1/peak only if |peak| > 1."""
    mix = np.float32(mix_gain) * (prompt + stem)
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if peak > 1.0:
        mix = mix / np.float32(peak)
    return mix


def mix_pairs(prompts: np.ndarray, stems: np.ndarray, mix_gain: float = 1.0,
              out: np.ndarray | None = None) -> np.ndarray:
    """Row-wise :func:`mix_waveforms` for stacked (N, L) windows.

    ``out`` may supply a reusable float32 buffer of the right shape.
    """
    if out is None:
        out = np.empty(prompts.shape, dtype=np.float32)
    np.add(prompts, stems, out=out)
    if mix_gain != 1.0:
        out *= np.float32(mix_gain)
    peaks = np.maximum(out.max(axis=1), -out.min(axis=1))
    over = np.flatnonzero(peaks > 1.0)
    if over.size:
        out[over] /= peaks[over, None]
    return out


def _check_pair(prompt: AudioWindow, stem: AudioWindow) -> None:
    if len(prompt.samples) != len(stem.samples):
        raise DataError(
            f"length mismatch: prompt {len(prompt.samples)}, stem {len(stem.samples)}"
        )
    if prompt.sample_rate != stem.sample_rate:
        raise DataError(
            f"sample rate mismatch: prompt {prompt.sample_rate}, stem {stem.sample_rate}"
        )


def _project_vector(projection: Projection | None, vec: np.ndarray) -> np.ndarray:
    if projection is None or projection.is_identity:
        return vec
    return apply_projection(projection, vec[None, :])[0]


def fuse_mix(prompt: AudioWindow, stem: AudioWindow, embedder, projection=None,
             mix_gain: float = 1.0) -> np.ndarray:
    """Early fusion: embed the mixed waveform."""
    _check_pair(prompt, stem)
    mixed = AudioWindow(
        samples=mix_waveforms(prompt.samples, stem.samples, mix_gain),
        sample_rate=prompt.sample_rate,
    )
    return _project_vector(projection, embed_window(mixed, embedder))


def fuse_sum(prompt: AudioWindow, stem: AudioWindow, embedder, projection=None) -> np.ndarray:
    """Late fusion: elementwise sum of the two embeddings."""
    _check_pair(prompt, stem)
    vec = embed_window(prompt, embedder) + embed_window(stem, embedder)
    return _project_vector(projection, vec)


def fuse_concat(prompt: AudioWindow, stem: AudioWindow, embedder, projection=None) -> np.ndarray:
    """Late fusion: prompt embedding in the first half, stem in the second."""
    _check_pair(prompt, stem)
    vec = np.concatenate([embed_window(prompt, embedder), embed_window(stem, embedder)])
    return _project_vector(projection, vec)


def fuse_pair(method: str, prompt: AudioWindow, stem: AudioWindow, embedder,
              projection=None, mix_gain: float = 1.0) -> np.ndarray:
    validate_fusion(method)
    if method == "mix":
        return fuse_mix(prompt, stem, embedder, projection, mix_gain)
    if method == "sum":
        return fuse_sum(prompt, stem, embedder, projection)
    return fuse_concat(prompt, stem, embedder, projection)


def fuse_batch(method: str, prompts: np.ndarray, stems: np.ndarray, embedder,
               projection=None, mix_gain: float = 1.0) -> np.ndarray:
    """Vectorized fusion of stacked (N, L) prompt and stem windows.

    Returns the (N, k) fused (and optionally projected) array. The mix
    method mixes and embeds in sub-batches so the mixed waveforms never
    materialize in full.
    """
    validate_fusion(method)
    if prompts.shape != stems.shape:
        raise DataError(f"shape mismatch: prompts {prompts.shape}, stems {stems.shape}")

    if method == "mix":
        n = prompts.shape[0]
        step = 64
        buf = np.empty((min(step, n), prompts.shape[1]), dtype=np.float32)
        fused = None
        for start in range(0, n, step):
            stop = min(start + step, n)
            mixed = mix_pairs(prompts[start:stop], stems[start:stop], mix_gain,
                              out=buf[: stop - start])
            part = embedder.embed_batch(mixed)
            if fused is None:
                fused = np.empty((n, part.shape[1]), dtype=part.dtype)
            fused[start:stop] = part
    elif method == "sum":
        fused = embedder.embed_batch(prompts) + embedder.embed_batch(stems)
    else:
        fused = np.concatenate(
            [embedder.embed_batch(prompts), embedder.embed_batch(stems)], axis=1
        )

    if projection is None or projection.is_identity:
        return fused
    return apply_projection(projection, fused)
