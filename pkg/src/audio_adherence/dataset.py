"""Multitrack ingestion, silence profiling and prompt/stem pair sampling.

A *project* is a set of equal-length stems. Pairs are built by sampling a
window position on a 1 s hop grid, designating one non-silent stem as the
target and mixing a random non-empty subset of the other non-silent stems
into the prompt. Both halves of every pair are guaranteed non-silent at
the window center.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio
from .embedding import AudioWindow
from .errors import DataError, InsufficientWindowsError
from .rng import substream

DEFAULT_WINDOW_SECONDS = 5.0
DEFAULT_HOP_SECONDS = 1.0
DEFAULT_SILENCE_THRESHOLD_DB = -60.0
SILENCE_FRAME_SECONDS = 0.1

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "pairset-manifest-v1"


@dataclass
class Project:
    """Named stems sharing one sample rate and (zero-padded) length."""

    id: str
    stems: dict  # name -> 1-D float32 array
    sample_rate: int

    @property
    def length(self) -> int:
        return len(next(iter(self.stems.values())))

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate


@dataclass
class PairProvenance:
    project_id: str
    offset_seconds: float
    target_stem: str
    prompt_stems: tuple
    perturbation: dict | None = None

    def to_dict(self) -> dict:
        return {
            "project": self.project_id,
            "offset_seconds": self.offset_seconds,
            "target_stem": self.target_stem,
            "prompt_stems": list(self.prompt_stems),
            "perturbation": self.perturbation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairProvenance":
        return cls(
            project_id=d["project"],
            offset_seconds=d["offset_seconds"],
            target_stem=d["target_stem"],
            prompt_stems=tuple(d["prompt_stems"]),
            perturbation=d["perturbation"],
        )


@dataclass
class PairSet:
    """Index-aligned stacks of prompt and stem windows with provenance."""

    prompts: np.ndarray  # (N, L) float32
    stems: np.ndarray  # (N, L) float32
    sample_rate: int
    window_seconds: float
    provenance: list = field(default_factory=list)
    collection: str = ""

    def __len__(self) -> int:
        return self.prompts.shape[0]

    def pair(self, i: int) -> tuple[AudioWindow, AudioWindow]:
        return (
            AudioWindow(self.prompts[i], self.sample_rate),
            AudioWindow(self.stems[i], self.sample_rate),
        )


def load_project(paths, project_id: str | None = None,
                 sample_rate: int = audio.PIPELINE_SAMPLE_RATE) -> Project:
    """Load stem files: mono downmix, resample, zero-pad to common length."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise DataError("project has no stem files")
    stems = {}
    for path in sorted(paths):
        samples, rate = audio.read_wav(path)
        mono = audio.downmix_mono(samples)
        stems[path.stem] = audio.resample(mono, rate, sample_rate)
    longest = max(len(s) for s in stems.values())
    for name, samples in stems.items():
        if len(samples) < longest:
            stems[name] = np.pad(samples, (0, longest - len(samples)))
    return Project(
        id=project_id if project_id is not None else paths[0].parent.name,
        stems=stems,
        sample_rate=sample_rate,
    )


def load_collection(root, sample_rate: int = audio.PIPELINE_SAMPLE_RATE) -> list:
    """Load ``root/<project>/*.wav`` into a sorted list of projects."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"collection directory not found: {root}")
    projects = []
    for proj_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        wavs = sorted(proj_dir.glob("*.wav"))
        if wavs:
            projects.append(load_project(wavs, project_id=proj_dir.name,
                                          sample_rate=sample_rate))
    if not projects:
        raise DataError(f"no projects with WAV stems under {root}")
    return projects


def is_silent(stem: np.ndarray, center_time: float, sample_rate: int,
              threshold_db: float = DEFAULT_SILENCE_THRESHOLD_DB) -> bool:
    """True iff the 100 ms frame centered at center_time has RMS < threshold.

    Frames reaching past either end are zero-padded, i.e. the RMS denominator
    stays the full frame length.
    """
    frame_len = int(round(SILENCE_FRAME_SECONDS * sample_rate))
    center = int(round(center_time * sample_rate))
    start = center - frame_len // 2
    lo = max(start, 0)
    hi = min(start + frame_len, len(stem))
    if hi <= lo:
        return True
    energy = float(np.sum(np.square(stem[lo:hi], dtype=np.float64)))
    rms_value = np.sqrt(energy / frame_len)
    return rms_value < 10.0 ** (threshold_db / 20.0)


def mix_stems(stems: list) -> AudioWindow:
    """Samplewise sum of windows; peak-rescaled only if |peak| > 1."""
    if not stems:
        raise DataError("cannot mix an empty stem list")
    rate = stems[0].sample_rate
    length = len(stems[0].samples)
    for w in stems[1:]:
        if len(w.samples) != length:
            raise DataError("stems must share length")
        if w.sample_rate != rate:
            raise DataError("stems must share sample rate")
    total = _sum_and_normalize([w.samples for w in stems])
    return AudioWindow(samples=total, sample_rate=rate)


def _sum_and_normalize(arrays: list) -> np.ndarray:
    total = arrays[0].astype(np.float32)  # astype copies; safe to accumulate into
    for arr in arrays[1:]:
        total += arr
    return audio.peak_normalize_mix(total)


def eligible_grid(projects: list, window_seconds: float = DEFAULT_WINDOW_SECONDS,
                  hop_seconds: float = DEFAULT_HOP_SECONDS,
                  threshold_db: float = DEFAULT_SILENCE_THRESHOLD_DB) -> list:
    """All (project index, offset) grid positions with >= 2 non-silent stems.

    Returns a list of (project_index, offset_seconds, [non-silent stem names]).
    """
    grid = []
    for pi, project in enumerate(projects):
        if len(project.stems) < 2:
            continue
        max_offset = project.duration - window_seconds
        n_offsets = int(np.floor(max_offset / hop_seconds)) + 1 if max_offset >= 0 else 0
        names = sorted(project.stems)
        for oi in range(n_offsets):
            offset = oi * hop_seconds
            center = offset + window_seconds / 2.0
            active = [
                name for name in names
                if not is_silent(project.stems[name], center, project.sample_rate,
                                 threshold_db)
            ]
            if len(active) >= 2:
                grid.append((pi, offset, active))
    return grid


def sample_pairs(projects: list, n_windows: int, seed: int,
                 window_seconds: float = DEFAULT_WINDOW_SECONDS,
                 hop_seconds: float = DEFAULT_HOP_SECONDS,
                 threshold_db: float = DEFAULT_SILENCE_THRESHOLD_DB,
                 allow_replacement: bool = False,
                 collection: str = "",
                 out_prompts: np.ndarray | None = None,
                 out_stems: np.ndarray | None = None) -> PairSet:
    """Sample prompt/stem pairs uniformly over the eligible window grid.

    Positions are drawn without replacement until the grid is exhausted;
    beyond that an error is raised unless ``allow_replacement`` is set, in
    which case sampling continues with replacement (with a warning). The
    target stem is uniform over the non-silent stems at the window center;
    the prompt mixes a uniform non-empty subset of the remaining non-silent
    stems. Fully deterministic given ``seed``.
    """
    if n_windows < 1:
        raise DataError(f"n_windows must be >= 1, got {n_windows}")
    for project in projects:
        if len(project.stems) < 2:
            raise DataError(f"project {project.id!r} has fewer than 2 stems")
    rate = projects[0].sample_rate
    window_len = int(round(window_seconds * rate))

    grid = eligible_grid(projects, window_seconds, hop_seconds, threshold_db)
    if not grid:
        raise DataError("no eligible windows: every grid position has < 2 "
                        "non-silent stems")
    if len(grid) < n_windows and not allow_replacement:
        raise InsufficientWindowsError(requested=n_windows, available=len(grid))

    rng = substream(seed, "sample-pairs", collection)
    order = rng.permutation(len(grid))

    shape = (n_windows, window_len)
    prompts = out_prompts if out_prompts is not None and out_prompts.shape == shape \
        else np.empty(shape, dtype=np.float32)
    stems = out_stems if out_stems is not None and out_stems.shape == shape \
        else np.empty(shape, dtype=np.float32)
    provenance = []
    produced = 0
    draws = 0
    warned = False
    max_draws = max(n_windows * 20, len(grid) * 4)
    while produced < n_windows:
        if draws < len(order):
            gi = order[draws]
        else:
            if not allow_replacement:
                raise InsufficientWindowsError(requested=n_windows, available=produced)
            if not warned:
                warnings.warn(
                    f"eligible grid ({len(grid)} positions) exhausted; "
                    "continuing with replacement"
                )
                warned = True
            gi = int(rng.integers(0, len(grid)))
        draws += 1
        if draws > max_draws:
            raise DataError(
                f"sampling stalled after {draws} draws ({produced}/{n_windows} "
                "pairs built); prompts keep cancelling to silence"
            )

        pi, offset, active = grid[gi]
        project = projects[pi]
        start = int(round(offset * rate))
        sl = slice(start, start + window_len)

        target = active[int(rng.integers(0, len(active)))]
        rest = [name for name in active if name != target]
        row = prompts[produced]  # accumulate in place; the loop is allocation-free
        chosen = None
        for _ in range(8):  # redraw on pathological cancellation to silence
            mask = rng.integers(0, 2, size=len(rest))
            if not mask.any():
                continue
            subset = [name for name, m in zip(rest, mask) if m]
            np.copyto(row, project.stems[subset[0]][sl])
            for name in subset[1:]:
                row += project.stems[name][sl]
            peak = max(float(row.max()), float(-row.min()))
            if peak > 1.0:
                row /= np.float32(peak)
            if not is_silent(row, window_seconds / 2.0, rate, threshold_db):
                chosen = subset
                break
        if chosen is None:
            continue

        stems[produced] = project.stems[target][sl]
        provenance.append(PairProvenance(
            project_id=project.id,
            offset_seconds=float(offset),
            target_stem=target,
            prompt_stems=tuple(chosen),
        ))
        produced += 1

    return PairSet(
        prompts=prompts,
        stems=stems,
        sample_rate=rate,
        window_seconds=window_seconds,
        provenance=provenance,
        collection=collection,
    )


def split_projects(projects: list, seed: int, collection: str = "",
                   reference_ids: list | None = None,
                   candidate_ids: list | None = None) -> tuple[list, list]:
    """Partition projects into reference/candidate halves (no overlap).

    With explicit id lists the predefined split is used (e.g. a dataset's
    train/test partition); otherwise a seeded 1:1 shuffle split.
    """
    if reference_ids is not None or candidate_ids is not None:
        ref_ids = set(reference_ids or [])
        cand_ids = set(candidate_ids or [])
        overlap = ref_ids & cand_ids
        if overlap:
            raise DataError(f"projects on both sides of the split: {sorted(overlap)}")
        by_id = {p.id: p for p in projects}
        missing = (ref_ids | cand_ids) - set(by_id)
        if missing:
            raise DataError(f"split names unknown projects: {sorted(missing)}")
        reference = [by_id[i] for i in sorted(ref_ids)]
        candidate = [by_id[i] for i in sorted(cand_ids)]
    else:
        order = substream(seed, "split", collection).permutation(len(projects))
        shuffled = [projects[i] for i in order]
        half = (len(projects) + 1) // 2
        reference, candidate = shuffled[:half], shuffled[half:]
    if not reference or not candidate:
        raise DataError("split left one side empty; need >= 2 projects")
    return reference, candidate


def save_pairset(pairset: PairSet, out_dir, include_mix: bool = False) -> Path:
    """Write a manifest plus per-pair window WAVs; returns the manifest path.

    With ``include_mix`` a unity-gain prompt+stem mix is cached per pair as
    well (what an external extractor embeds for early fusion). Sorted window
    filenames then run mix, prompt, stem per pair.
    """
    out_dir = Path(out_dir)
    windows_dir = out_dir / "windows"
    windows_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, prov in enumerate(pairset.provenance):
        prompt_name = f"pair{i:05d}_prompt.wav"
        stem_name = f"pair{i:05d}_stem.wav"
        audio.write_wav(windows_dir / prompt_name, pairset.prompts[i], pairset.sample_rate)
        audio.write_wav(windows_dir / stem_name, pairset.stems[i], pairset.sample_rate)
        entry = prov.to_dict()
        entry["prompt_wav"] = f"windows/{prompt_name}"
        entry["stem_wav"] = f"windows/{stem_name}"
        if include_mix:
            mix_name = f"pair{i:05d}_mix.wav"
            mix = _sum_and_normalize([pairset.prompts[i], pairset.stems[i]])
            audio.write_wav(windows_dir / mix_name, mix, pairset.sample_rate)
            entry["mix_wav"] = f"windows/{mix_name}"
        entries.append(entry)
    manifest = {
        "format": MANIFEST_FORMAT,
        "collection": pairset.collection,
        "sample_rate": pairset.sample_rate,
        "window_seconds": pairset.window_seconds,
        "n_pairs": len(pairset),
        "pairs": entries,
    }
    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def load_pairset(manifest_dir) -> PairSet:
    manifest_dir = Path(manifest_dir)
    manifest_path = manifest_dir / MANIFEST_NAME
    if manifest_path.is_file():
        base = manifest_dir
    elif manifest_dir.is_file():
        manifest_path, base = manifest_dir, manifest_dir.parent
    else:
        raise DataError(f"no {MANIFEST_NAME} under {manifest_dir}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DataError(f"unknown manifest format {manifest.get('format')!r}")
    rate = manifest["sample_rate"]
    prompts, stems, provenance = [], [], []
    for entry in manifest["pairs"]:
        p, pr = audio.read_wav(base / entry["prompt_wav"])
        s, sr = audio.read_wav(base / entry["stem_wav"])
        if pr != rate or sr != rate:
            raise DataError("window cache sample rate disagrees with manifest")
        prompts.append(audio.downmix_mono(p))
        stems.append(audio.downmix_mono(s))
        provenance.append(PairProvenance.from_dict(entry))
    return PairSet(
        prompts=np.stack(prompts),
        stems=np.stack(stems),
        sample_rate=rate,
        window_seconds=manifest["window_seconds"],
        provenance=provenance,
        collection=manifest.get("collection", ""),
    )
