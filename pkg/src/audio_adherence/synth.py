"""Synthetic multitrack collections for testing and demos.

Each project is a small "band": four stems sharing one root note and one
beat grid. Stems play consonant intervals (root, fifth, octave, tenth)
with project-specific timbres; two stems sustain throughout, two are gated
on a per-beat pattern (hard zeros between events, so silence detection has
something to do). Prompt adherence signal is thus carried by harmonic
consonance and rhythmic alignment, both of which random re-pairing, pitch
shifts and time shifts disrupt.

Two timbre/tempo families are provided so that two generated collections
differ the way distinct music libraries would.
"""

from pathlib import Path

import numpy as np

from . import audio
from .rng import substream

# Musical vocabulary shared by every project: one global chord progression
# (8-beat sections) that projects enter at a random phase, near-common
# tempo, and two chord voicings. Every project's windows then sweep the
# same embedding regions, so any two sampled project subsets are
# statistically exchangeable and distribution distances respond to pair
# coherence rather than to which projects a subset happens to contain.
PROGRESSION = (45, 50, 47, 52)  # section roots, cycled
BEAT_RANGE = (0.94, 1.06)
SECTION_BEATS = 8
INTERVAL_SETS = (
    (0, 7, 12, 16),
)
MICRO_OFFSET_RANGE = 0.04  # s; per-stem groove looseness within a project
_EDGE_SMOOTH_SECONDS = 0.02


# The two families differ the way two catalogs of similar music would
# (brightness tilt, arrangement taste), not like alien genres: between-
# collection comparisons stay meaningful for relative proximity.
_FAMILIES = {
    0: {
        "partial_rolloff": 0.55,
        "register_hop": 0.35,
        "odd_partials_only": False,
        "n_partials": 8,
    },
    1: {
        "partial_rolloff": 0.60,
        "register_hop": 0.45,
        "odd_partials_only": False,
        "n_partials": 8,
    },
}


def _midi_to_hz(midi: float) -> float:
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def _smooth_gate(gate: np.ndarray, sample_rate: int) -> np.ndarray:
    kernel_len = int(_EDGE_SMOOTH_SECONDS * sample_rate)
    kernel = np.hanning(kernel_len)
    kernel /= kernel.sum()
    return np.convolve(gate, kernel, mode="same")


def synthesize_project(seed: int, project_index: int, duration: float = 30.5,
                       sample_rate: int = audio.PIPELINE_SAMPLE_RATE,
                       family: int = 0) -> dict:
    """Render one project's stems; returns {stem_name: float32 samples}."""
    params = _FAMILIES[family]
    rng = substream(seed, "project", project_index)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    beat = float(rng.uniform(*BEAT_RANGE))
    beat_idx = np.minimum((t / beat).astype(np.int64), int(duration / beat))
    intervals = INTERVAL_SETS[rng.integers(0, len(INTERVAL_SETS))]
    progression_phase = int(rng.integers(0, len(PROGRESSION)))

    # Call-and-response arrangement: each beat activates exactly two of the
    # four stems, so within a project the stems' energy envelopes are
    # anti-correlated and a matched mix stays evenly busy. Re-pairing or
    # time-shifting a stem breaks the interlock, producing collisions and
    # joint gaps that a matched set never shows.
    n_beats = int(duration / beat) + 2
    pair_table = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    beat_pairs = [pair_table[rng.integers(0, len(pair_table))] for _ in range(n_beats)]
    active = np.zeros((4, n_beats), dtype=np.float64)
    for bi, (a, b) in enumerate(beat_pairs):
        active[a, bi] = 1.0
        active[b, bi] = 1.0

    burst_len = int(0.05 * sample_rate)
    burst_env = np.exp(-np.arange(burst_len) / (0.012 * sample_rate))

    # arrangement sections (8 beats): the chord root follows the shared
    # progression, stems hop registers and change level, so a project's
    # windows spread over the same embedding regions every other project's
    # windows do, instead of forming one tight cluster
    section_len = SECTION_BEATS * beat
    n_sections = int(duration / section_len) + 2
    sec_idx = np.minimum((t / section_len).astype(np.int64), n_sections - 1)
    section_roots = [
        PROGRESSION[(progression_phase + s) % len(PROGRESSION)] for s in range(n_sections)
    ]
    edge = int(_EDGE_SMOOTH_SECONDS * sample_rate)
    fade_in = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)

    def synth_sections(interval, octave_up, rolloff, detune):
        """Piecewise tone following the progression; crossfaded section edges."""
        wave = np.zeros(n)
        for sec in range(n_sections):
            start = int(round(sec * section_len * sample_rate))
            stop = min(int(round((sec + 1) * section_len * sample_rate)), n)
            if stop <= start:
                continue
            freq = _midi_to_hz(section_roots[sec] + interval) * detune
            if octave_up[sec]:
                freq *= 2.0
            seg = np.zeros(stop - start)
            ts = t[start:stop]
            for p in range(1, params["n_partials"] + 1):
                if params["odd_partials_only"] and p % 2 == 0:
                    continue
                f = freq * p
                if f >= sample_rate / 2 * 0.95:
                    break
                seg += rolloff ** (p - 1) * np.sin(2 * np.pi * f * ts + rng.uniform(0, 2 * np.pi))
            if len(seg) > 2 * edge:
                seg[:edge] *= fade_in
                seg[-edge:] *= fade_in[::-1]
            wave[start:stop] = seg
        return wave / np.max(np.abs(wave))

    stems = {}
    for si, interval in enumerate(intervals):
        detune = 1.0 + rng.normal(0.0, 2e-4)
        rolloff = params["partial_rolloff"] * (1.0 + 0.08 * rng.uniform(-1, 1))
        octave_up = rng.random(n_sections) < params["register_hop"]
        wave = synth_sections(interval, octave_up, rolloff, detune)
        level = _smooth_gate(rng.uniform(0.55, 1.0, size=n_sections)[sec_idx], sample_rate)
        wave *= level

        # slow amplitude drift so different window offsets differ
        lfo_rate = rng.uniform(0.05, 0.2)
        lfo = 0.8 + 0.2 * np.sin(2 * np.pi * lfo_rate * t + rng.uniform(0, 2 * np.pi))
        wave *= lfo

        gate = _smooth_gate(active[si][beat_idx], sample_rate)

        # percussive onset bursts in the high bands no stem occupies
        # tonally, making rhythmic (mis)alignment visible to spectrogram
        # statistics of any stem combination
        clicks = np.zeros(n)
        for bi in np.flatnonzero(active[si]):
            start = int(round(bi * beat * sample_rate))
            stop = min(start + burst_len, n)
            if stop > start:
                clicks[start:stop] += burst_env[: stop - start]
        hp_noise = np.diff(rng.normal(0.0, 1.0, size=n + 1))
        clicks *= hp_noise * 0.45

        # active beats at full level, a quiet-but-audible floor otherwise,
        # so silence gating never excludes a stem mid-song
        wave = wave * (0.18 + 0.82 * gate) + clicks + rng.normal(0.0, 0.001, size=n)

        # groove looseness: a constant per-stem micro offset keeps matched
        # sets varied along the alignment axis while staying far tighter
        # than any perturbation-scale shift
        micro = int(round(rng.uniform(-MICRO_OFFSET_RANGE, MICRO_OFFSET_RANGE)
                          * sample_rate))
        if micro:
            wave = np.roll(wave, micro)

        peak = np.max(np.abs(wave))
        target_peak = 0.4 * (1.0 + 0.05 * rng.uniform(-1, 1))
        stems[f"stem{si}_iv{interval:02d}"] = (wave / peak * target_peak).astype(np.float32)
    return stems


def make_collection(out_dir, name: str, n_projects: int = 20, seed: int = 0,
                    duration: float = 30.5, family: int = 0,
                    sample_rate: int = audio.PIPELINE_SAMPLE_RATE) -> Path:
    """Write ``out_dir/name/project_XX/*.wav``; returns the collection path."""
    root = Path(out_dir) / name
    for pi in range(n_projects):
        proj_dir = root / f"project_{pi:02d}"
        proj_dir.mkdir(parents=True, exist_ok=True)
        for stem_name, samples in synthesize_project(
            seed, pi, duration=duration, sample_rate=sample_rate, family=family
        ).items():
            audio.write_wav(proj_dir / f"{stem_name}.wav", samples, sample_rate)
    return root


def make_demo_corpus(out_dir, n_projects: int = 20, seed: int = 0,
                     duration: float = 30.5) -> list:
    """Two collections from different families; returns their paths."""
    return [
        make_collection(out_dir, "collection_a", n_projects, seed=seed,
                        duration=duration, family=0),
        make_collection(out_dir, "collection_b", n_projects, seed=seed + 1,
                        duration=duration, family=1),
    ]
