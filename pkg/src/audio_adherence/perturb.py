"""Stem perturbations used as graded non-matching conditions.

Pitch shifting resamples by 2^(-semitones/12) (polyphase windowed sinc)
and restores the original duration with a waveform-similarity overlap-add
time stretch (30 ms Hann frames, 50% overlap, +-10 ms alignment search).
Time shifting rotates the window circularly so no silence is introduced.
Prompts are never touched.
"""

from dataclasses import replace
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .adherence import make_nonmatching
from .dataset import PairSet
from .embedding import AudioWindow
from .errors import ConfigError, DataError
from .rng import substream

CONDITIONS = ("random", "pitch", "time", "pitch_time", "none")

PITCH_SEMITONE_CHOICES = tuple(range(1, 8))  # magnitudes, sign drawn separately
TIME_SHIFT_RANGE = (0.2, 2.5)  # seconds, magnitude range
MAX_ABS_SEMITONES = 12.0

_FRAME_SECONDS = 0.030
_SEARCH_SECONDS = 0.010
_RATIO_MAX_DENOMINATOR = 512


def _resample_ratio(semitones: float) -> Fraction:
    return Fraction(2.0 ** (-semitones / 12.0)).limit_denominator(_RATIO_MAX_DENOMINATOR)


def _wsola_stretch(batch: np.ndarray, target_len: int, sample_rate: int) -> np.ndarray:
    """Stretch each row of ``batch`` to ``target_len`` samples, pitch preserved."""
    n, in_len = batch.shape
    frame = int(round(_FRAME_SECONDS * sample_rate))
    hop = frame // 2
    tol = int(round(_SEARCH_SECONDS * sample_rate))
    corr_len = tol  # alignment template: the frame head
    region_len = 2 * tol + corr_len
    nfft = 1 << int(np.ceil(np.log2(region_len)))

    window = np.hanning(frame).astype(np.float32)
    n_frames = max(1, int(np.ceil((target_len - frame) / hop)) + 1)
    ratio = in_len / target_len

    pad = tol + frame + hop
    padded = np.zeros((n, in_len + 2 * pad), dtype=np.float32)
    padded[:, pad : pad + in_len] = batch

    out = np.zeros((n, (n_frames - 1) * hop + frame), dtype=np.float32)
    weight = np.zeros(out.shape[1], dtype=np.float32)
    rows = np.arange(n)[:, None]
    frame_idx = np.arange(frame)[None, :]
    region_idx = np.arange(region_len)[None, :]

    chosen = np.zeros(n, dtype=np.int64)  # input start of the previous frame
    for k in range(n_frames):
        nominal = int(round(k * hop * ratio))
        if k == 0:
            starts = np.full(n, nominal, dtype=np.int64)
        else:
            templates = padded[rows, (chosen + hop + pad)[:, None] + np.arange(corr_len)[None, :]]
            regions = padded[rows, (nominal - tol + pad) + region_idx]
            spec_r = np.fft.rfft(regions, n=nfft, axis=1)
            spec_t = np.fft.rfft(templates, n=nfft, axis=1)
            corr = np.fft.irfft(spec_r * np.conj(spec_t), n=nfft, axis=1)[:, : 2 * tol + 1]
            starts = nominal - tol + np.argmax(corr, axis=1)
        frames = padded[rows, (starts + pad)[:, None] + frame_idx] * window
        lo = k * hop
        out[:, lo : lo + frame] += frames
        weight[lo : lo + frame] += window
        chosen = starts

    out /= np.maximum(weight, 1e-12)
    return out[:, :target_len]


def pitch_shift_batch(stems: np.ndarray, semitones: np.ndarray, sample_rate: int) -> np.ndarray:
    """Pitch-shift stacked windows, length preserved. semitones may vary per row."""
    stems = np.asarray(stems, dtype=np.float32)
    semitones = np.asarray(semitones, dtype=np.float64)
    if np.any(np.abs(semitones) > MAX_ABS_SEMITONES):
        raise DataError(f"|semitones| capped at {MAX_ABS_SEMITONES}")
    out = np.empty_like(stems)
    target_len = stems.shape[1]
    for value in np.unique(semitones):
        idx = np.flatnonzero(semitones == value)
        if value == 0.0:
            out[idx] = stems[idx]
            continue
        ratio = _resample_ratio(value)
        resampled = resample_poly(stems[idx], ratio.numerator, ratio.denominator, axis=1)
        stretched = _wsola_stretch(np.asarray(resampled, dtype=np.float32),
                                   target_len, sample_rate)
        out[idx] = stretched
    return out


def pitch_shift(stem: AudioWindow, semitones: float) -> AudioWindow:
    """Scale fundamental frequencies by 2^(semitones/12), duration preserved."""
    if abs(semitones) > MAX_ABS_SEMITONES:
        raise DataError(f"|semitones| capped at {MAX_ABS_SEMITONES}, got {semitones}")
    stem.validate()
    if semitones == 0.0:
        return AudioWindow(stem.samples.copy(), stem.sample_rate)
    shifted = pitch_shift_batch(stem.samples[None, :], np.array([semitones]),
                                stem.sample_rate)[0]
    return AudioWindow(shifted, stem.sample_rate)


def time_shift(stem: AudioWindow, shift_seconds: float) -> AudioWindow:
    """Circular shift by round(shift_seconds * sample_rate) samples."""
    n_samples = len(stem.samples)
    shift = int(np.round(shift_seconds * stem.sample_rate))
    if abs(shift) >= n_samples:
        raise DataError(
            f"shift of {shift_seconds}s >= window length "
            f"({n_samples / stem.sample_rate}s)"
        )
    return AudioWindow(np.roll(stem.samples, shift), stem.sample_rate)


def _draw_semitones(rng: np.random.Generator) -> int:
    sign = 1 if rng.integers(0, 2) else -1
    return int(sign * PITCH_SEMITONE_CHOICES[rng.integers(0, len(PITCH_SEMITONE_CHOICES))])


def _draw_shift_seconds(rng: np.random.Generator) -> float:
    sign = 1.0 if rng.integers(0, 2) else -1.0
    lo, hi = TIME_SHIFT_RANGE
    return float(sign * rng.uniform(lo, hi))


def apply_condition(pairs: PairSet, condition: str, seed: int) -> PairSet:
    """Derive a non-matching pair set under one perturbation condition.

    ``random`` re-pairs stems by derangement; ``pitch``/``time`` draw a
    signed magnitude per pair (semitones uniform over 1..7, shift uniform
    over [0.2, 2.5] s); ``pitch_time`` applies both with independent draws;
    ``none`` returns the pairs unchanged (control). Deterministic given
    ``seed``; prompts are reused untouched.
    """
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    if len(pairs) == 0:
        raise DataError("empty pair set")
    if condition == "none":
        return pairs
    if condition == "random":
        return make_nonmatching(pairs, seed)

    n = len(pairs)
    semitones = np.zeros(n)
    shifts = np.zeros(n)
    provenance = []
    # Parameter-specific substreams keep draws identical across conditions
    # sharing a seed (pitch_time composes the pitch and time draws).
    for i in range(n):
        tag = {"kind": condition, "seed": seed}
        if condition in ("pitch", "pitch_time"):
            semitones[i] = _draw_semitones(substream(seed, "perturb", i, "semitones"))
            tag["semitones"] = int(semitones[i])
        if condition in ("time", "pitch_time"):
            shifts[i] = _draw_shift_seconds(substream(seed, "perturb", i, "shift"))
            tag["shift_seconds"] = shifts[i]
        provenance.append(replace(pairs.provenance[i], perturbation=tag))

    stems = pairs.stems
    if condition in ("pitch", "pitch_time"):
        stems = pitch_shift_batch(stems, semitones, pairs.sample_rate)
    if condition in ("time", "pitch_time"):
        shifted = np.empty_like(stems)
        for i in range(n):
            offset = int(np.round(shifts[i] * pairs.sample_rate))
            shifted[i] = np.roll(stems[i], offset)
        stems = shifted

    return PairSet(
        prompts=pairs.prompts,
        stems=stems,
        sample_rate=pairs.sample_rate,
        window_seconds=pairs.window_seconds,
        provenance=provenance,
        collection=pairs.collection,
    )


def iter_conditions(pairs: PairSet, conditions, seed: int):
    """Yield (condition, perturbed PairSet), sharing the pitch-shift work.

    Parameter draws use per-parameter substreams, so ``pitch_time`` composes
    exactly the draws of ``pitch`` and ``time`` for the same seed; the
    expensive shifted stems are therefore computed once and reused. Yields
    one set at a time so callers can release each before the next.
    """
    pitched = None
    for condition in conditions:
        if condition in ("pitch", "pitch_time") and pitched is None:
            pitched = apply_condition(pairs, "pitch", seed)
        if condition == "pitch":
            yield condition, pitched
        elif condition == "pitch_time":
            shifted = apply_condition(
                PairSet(
                    prompts=pairs.prompts,
                    stems=pitched.stems,
                    sample_rate=pairs.sample_rate,
                    window_seconds=pairs.window_seconds,
                    provenance=pairs.provenance,
                    collection=pairs.collection,
                ),
                "time",
                seed,
            )
            provenance = []
            for i, prov in enumerate(pairs.provenance):
                tag = {
                    "kind": "pitch_time",
                    "seed": seed,
                    "semitones": pitched.provenance[i].perturbation["semitones"],
                    "shift_seconds": shifted.provenance[i].perturbation["shift_seconds"],
                }
                provenance.append(replace(prov, perturbation=tag))
            yield condition, PairSet(
                prompts=pairs.prompts,
                stems=shifted.stems,
                sample_rate=pairs.sample_rate,
                window_seconds=pairs.window_seconds,
                provenance=provenance,
                collection=pairs.collection,
            )
        else:
            yield condition, apply_condition(pairs, condition, seed)


def apply_conditions(pairs: PairSet, conditions, seed: int) -> dict:
    """Materialized :func:`iter_conditions`."""
    return dict(iter_conditions(pairs, conditions, seed))
