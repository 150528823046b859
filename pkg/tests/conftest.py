import os
from pathlib import Path

import numpy as np
import pytest

from audio_adherence.embedding import BuiltinLogMelEmbedder
from audio_adherence.synth import make_demo_corpus

FIXTURE_ENV = "ADHERENCE_TEST_FIXTURE_DIR"


@pytest.fixture(scope="session")
def embedder():
    return BuiltinLogMelEmbedder()


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Two tiny collections for fast pipeline tests."""
    root = tmp_path_factory.mktemp("mini_corpus")
    return [str(p) for p in make_demo_corpus(root, n_projects=6, seed=3, duration=16.0)]


@pytest.fixture(scope="session")
def full_corpus(tmp_path_factory):
    """Desk-scale corpus used by the acceptance experiments.

    Set ADHERENCE_TEST_FIXTURE_DIR to cache it across test sessions.
    """
    override = os.environ.get(FIXTURE_ENV)
    if override:
        root = Path(override)
        if (root / "collection_a").is_dir() and (root / "collection_b").is_dir():
            return [str(root / "collection_a"), str(root / "collection_b")]
        root.mkdir(parents=True, exist_ok=True)
    else:
        root = tmp_path_factory.mktemp("full_corpus")
    return [str(p) for p in make_demo_corpus(root, n_projects=20, seed=0, duration=56.0)]


@pytest.fixture()
def sine_window():
    t = np.arange(80_000) / 16_000
    return (0.5 * np.sin(2 * np.pi * 440.0 * t)).astype(np.float32)
