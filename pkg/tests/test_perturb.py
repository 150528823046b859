import numpy as np
import pytest
from numpy.testing import assert_allclose

from audio_adherence.dataset import PairSet, PairProvenance
from audio_adherence.embedding import AudioWindow
from audio_adherence.errors import ConfigError, DataError
from audio_adherence.perturb import (
    CONDITIONS,
    apply_condition,
    apply_conditions,
    pitch_shift,
    time_shift,
)

RATE = 16_000
WINDOW = 80_000


def sine(freq, amplitude=0.5, n=WINDOW):
    t = np.arange(n) / RATE
    return (amplitude * np.sin(2 * np.pi * freq * t)).astype(np.float32)


def window(samples):
    return AudioWindow(np.asarray(samples, dtype=np.float32), RATE)


def dominant_hz(samples):
    spectrum = np.abs(np.fft.rfft(samples.astype(np.float64)))
    return np.argmax(spectrum) * RATE / len(samples)


class TestPitchShift:
    def test_zero_shift_identity(self):
        w = window(sine(440))
        out = pitch_shift(w, 0.0)
        assert np.array_equal(out.samples, w.samples)
        assert out.samples is not w.samples

    def test_octave_up(self):
        out = pitch_shift(window(sine(440)), 12.0)
        assert len(out.samples) == WINDOW
        bin_width = RATE / WINDOW
        assert abs(dominant_hz(out.samples) - 880.0) <= bin_width

    def test_octave_down(self):
        out = pitch_shift(window(sine(440)), -12.0)
        assert len(out.samples) == WINDOW
        bin_width = RATE / WINDOW
        assert abs(dominant_hz(out.samples) - 220.0) <= bin_width

    @pytest.mark.parametrize("semitones", [-7, -3, 1, 5, 7])
    def test_intermediate_shifts(self, semitones):
        out = pitch_shift(window(sine(440)), float(semitones))
        target = 440.0 * 2 ** (semitones / 12)
        assert len(out.samples) == WINDOW
        assert abs(dominant_hz(out.samples) - target) <= 2 * RATE / WINDOW

    def test_cap(self):
        with pytest.raises(DataError):
            pitch_shift(window(sine(440)), 13.0)


class TestTimeShift:
    def test_zero_identity(self):
        w = window(sine(440))
        assert np.array_equal(time_shift(w, 0.0).samples, w.samples)

    def test_composition_is_exact_identity(self):
        w = window(np.random.default_rng(0).uniform(-0.5, 0.5, WINDOW))
        back = time_shift(time_shift(w, 2.5), -2.5)
        assert np.array_equal(back.samples, w.samples)

    def test_impulse_moves_to_expected_sample(self):
        samples = np.zeros(WINDOW, dtype=np.float32)
        samples[0] = 1.0
        out = time_shift(window(samples), 0.5)
        assert out.samples[8000] == 1.0
        assert np.count_nonzero(out.samples) == 1

    def test_shift_longer_than_window_rejected(self):
        with pytest.raises(DataError):
            time_shift(window(sine(440)), 5.0)


def toy_pairset(n=8, seed=0, length=WINDOW):
    rng = np.random.default_rng(seed)
    t = np.arange(length) / RATE
    prompts = np.stack([
        (0.4 * np.sin(2 * np.pi * (180 + 10 * i) * t)).astype(np.float32)
        for i in range(n)
    ])
    stems = np.stack([
        (0.4 * np.sin(2 * np.pi * (240 + 10 * i) * t)).astype(np.float32)
        for i in range(n)
    ])
    return PairSet(
        prompts=prompts, stems=stems, sample_rate=RATE,
        window_seconds=length / RATE,
        provenance=[
            PairProvenance(project_id=f"p{i}", offset_seconds=0.0,
                           target_stem="s", prompt_stems=("a",))
            for i in range(n)
        ],
    )


class TestApplyCondition:
    def test_pitch_parameter_ranges(self):
        pairs = toy_pairset()
        out = apply_condition(pairs, "pitch", seed=3)
        for prov in out.provenance:
            st = prov.perturbation["semitones"]
            assert 1 <= abs(st) <= 7
            assert st == int(st)

    def test_time_parameter_ranges(self):
        pairs = toy_pairset()
        out = apply_condition(pairs, "time", seed=3)
        for prov in out.provenance:
            shift = prov.perturbation["shift_seconds"]
            assert 0.2 <= abs(shift) <= 2.5

    def test_pitch_time_draws_match_singles(self):
        pairs = toy_pairset()
        pitch = apply_condition(pairs, "pitch", seed=5)
        time_ = apply_condition(pairs, "time", seed=5)
        both = apply_condition(pairs, "pitch_time", seed=5)
        for i in range(len(pairs)):
            assert both.provenance[i].perturbation["semitones"] == \
                pitch.provenance[i].perturbation["semitones"]
            assert both.provenance[i].perturbation["shift_seconds"] == \
                time_.provenance[i].perturbation["shift_seconds"]

    def test_deterministic(self):
        pairs = toy_pairset()
        a = apply_condition(pairs, "pitch_time", seed=9)
        b = apply_condition(pairs, "pitch_time", seed=9)
        assert np.array_equal(a.stems, b.stems)
        assert a.provenance == b.provenance

    def test_prompts_untouched(self):
        pairs = toy_pairset()
        for condition in ("random", "pitch", "time", "pitch_time"):
            out = apply_condition(pairs, condition, seed=1)
            assert out.prompts is pairs.prompts

    def test_lengths_preserved(self):
        pairs = toy_pairset()
        for condition in ("pitch", "time", "pitch_time"):
            out = apply_condition(pairs, condition, seed=2)
            assert out.stems.shape == pairs.stems.shape

    def test_none_is_passthrough(self):
        pairs = toy_pairset()
        assert apply_condition(pairs, "none", seed=1) is pairs

    def test_random_delegates_to_derangement(self):
        pairs = toy_pairset()
        out = apply_condition(pairs, "random", seed=4)
        for i, prov in enumerate(out.provenance):
            assert prov.perturbation["kind"] == "random_pairing"
            assert prov.perturbation["stem_from_pair"] != i

    def test_unknown_condition(self):
        with pytest.raises(ConfigError):
            apply_condition(toy_pairset(), "reverse", seed=0)
        assert set(CONDITIONS) == {"random", "pitch", "time", "pitch_time", "none"}

    def test_apply_conditions_shares_pitch_work(self):
        pairs = toy_pairset(n=4)
        combined = apply_conditions(pairs, ("pitch", "pitch_time", "time"), seed=6)
        direct_pitch = apply_condition(pairs, "pitch", seed=6)
        direct_both = apply_condition(pairs, "pitch_time", seed=6)
        assert np.array_equal(combined["pitch"].stems, direct_pitch.stems)
        assert_allclose(combined["pitch_time"].stems, direct_both.stems,
                        rtol=1e-5, atol=1e-6)

    def test_empty_pairset_rejected(self):
        empty = PairSet(prompts=np.zeros((0, 10), np.float32),
                        stems=np.zeros((0, 10), np.float32),
                        sample_rate=RATE, window_seconds=10 / RATE)
        with pytest.raises(DataError):
            apply_condition(empty, "pitch", seed=0)
