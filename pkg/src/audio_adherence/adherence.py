"""Non-matching set construction and the prompt adherence score.

The score compares a candidate embedding set Y against a matching
reference set and a deranged (non-matching) copy of it:

    score = (d_nonmatching - d_matching) / (d_nonmatching + d_matching)

which lies in [-1, 1] whenever the two distances are not both zero, and is
undefined otherwise. Positive values mean Y sits closer to the matching
reference than to the deranged one.
"""

from dataclasses import dataclass, replace

import numpy as np

from .dataset import PairSet
from .errors import DataError, UndefinedScoreError
from .metrics import distance
from .rng import substream


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform fixed-point-free permutation of range(n), by rejection."""
    if n < 2:
        raise DataError(f"no derangement exists for n={n}")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def make_nonmatching(pairs: PairSet, seed: int) -> PairSet:
    """Re-pair prompts with stems via a uniform derangement.

    Prompt windows and prompt-side provenance are preserved; each pair's
    stem is replaced by the stem of a different pair (never its own).
    """
    n = len(pairs)
    perm = derangement(n, substream(seed, "derangement"))
    provenance = []
    for i, donor in enumerate(perm):
        orig = pairs.provenance[i]
        donor_prov = pairs.provenance[donor]
        provenance.append(replace(
            orig,
            target_stem=donor_prov.target_stem,
            perturbation={
                "kind": "random_pairing",
                "seed": seed,
                "stem_from_pair": int(donor),
                "stem_from_project": donor_prov.project_id,
            },
        ))
    return PairSet(
        prompts=pairs.prompts,
        stems=pairs.stems[perm],
        sample_rate=pairs.sample_rate,
        window_seconds=pairs.window_seconds,
        provenance=provenance,
        collection=pairs.collection,
    )


@dataclass
class AdherenceScore:
    value: float
    metric: str
    d_matching: float
    d_nonmatching: float
    derangement_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "score": self.value,
            "metric": self.metric,
            "d_matching": self.d_matching,
            "d_nonmatching": self.d_nonmatching,
            "derangement_seed": self.derangement_seed,
        }


def score_from_distances(d_matching: float, d_nonmatching: float) -> float:
    """(d_nonmatching - d_matching) / (d_nonmatching + d_matching).

    Defined for non-negative distances that are not both zero; the result
    is always in [-1, 1] and is invariant to scaling both distances.
    """
    if d_matching < 0 or d_nonmatching < 0:
        raise DataError("distances must be non-negative")
    total = d_matching + d_nonmatching
    if total == 0.0:
        raise UndefinedScoreError(
            "both distances are zero; the adherence score is undefined"
        )
    return (d_nonmatching - d_matching) / total


def adherence_score(metric: str, reference, reference_nonmatching, candidate,
                    derangement_seed: int | None = None) -> AdherenceScore:
    """Score a candidate set against matching and deranged reference sets.

    All three embedding sets must come from the same fused pipeline (same
    backend, fusion method and projection).
    """
    d_matching = distance(metric, reference, candidate)
    d_nonmatching = distance(metric, reference_nonmatching, candidate)
    value = score_from_distances(d_matching, d_nonmatching)
    return AdherenceScore(
        value=float(value),
        metric=metric,
        d_matching=d_matching,
        d_nonmatching=d_nonmatching,
        derangement_seed=derangement_seed,
    )
