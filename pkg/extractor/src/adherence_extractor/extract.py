"""Window-cache extraction to AEMB files."""

import os
from pathlib import Path

import numpy as np

from .aemb import write_aemb
from .models import build_backend
from .preprocess import read_wav_mono

MODEL_DIMS = {
    "vggish": 128,
    "openl3": 6144,
    "clap0": 512,
    "clap1": 512,
    "clap2": 128,
}


def list_windows(windows_dir) -> list:
    """Window WAVs in sorted filename order (the row-alignment contract)."""
    windows_dir = Path(windows_dir)
    if (windows_dir / "windows").is_dir():
        windows_dir = windows_dir / "windows"
    files = sorted(windows_dir.glob("*.wav"))
    if not files:
        raise FileNotFoundError(f"no WAV windows under {windows_dir}")
    return files


def extract(windows_dir, model: str, out_path, weights=None,
            random_init: bool = False, progress=None) -> Path:
    """Embed every window WAV and write one AEMB row per file.

    Rows follow sorted filename order exactly; the file is written to a
    temporary name and atomically renamed once complete.
    """
    if model not in MODEL_DIMS:
        raise ValueError(f"unknown model {model!r}; expected one of {sorted(MODEL_DIMS)}")
    backend = build_backend(model, weights=weights, random_init=random_init)
    files = list_windows(windows_dir)
    rows = np.empty((len(files), MODEL_DIMS[model]), dtype=np.float32)
    for i, path in enumerate(files):
        samples, rate = read_wav_mono(path)
        rows[i] = backend.embed_window(samples, rate)
        if progress:
            progress(i + 1, len(files), path.name)
    if not np.isfinite(rows).all():
        raise ValueError("model produced non-finite embeddings")

    out_path = Path(out_path)
    tmp_path = out_path.with_name(out_path.name + ".tmp")
    ident = model if weights is not None else f"{model};weights=random-init"
    write_aemb(tmp_path, rows, ident)
    os.replace(tmp_path, out_path)
    return out_path
