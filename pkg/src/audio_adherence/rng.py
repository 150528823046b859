"""Named, seedable random substreams.

Every stochastic choice in the pipeline (window sampling, target choice,
prompt subsets, derangements, perturbation draws) pulls from a substream
derived from one master seed plus a path of string/int labels, so results
are reproducible across platforms and independent of execution order.
"""

import hashlib

import numpy as np


def _label_hash(label) -> int:
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(master_seed: int, *labels) -> np.random.Generator:
    """Return a Generator for the substream named by ``labels``.

    The same (master_seed, labels) always yields the same stream; distinct
    label paths give statistically independent streams.
    """
    entropy = [int(master_seed)] + [_label_hash(lab) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(master_seed: int, *labels) -> int:
    """Deterministically derive a child integer seed for a named stage."""
    material = ":".join([str(int(master_seed))] + [str(lab) for lab in labels])
    digest = hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1  # keep it a positive int64
