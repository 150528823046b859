"""Distribution-based measurement of audio prompt adherence.

Candidate prompt/stem pairs are fused into embedding vectors, and the
distance of the candidate distribution to a matching reference set is
contrasted with its distance to a deranged (non-matching) copy of it,
yielding a score in [-1, 1].
"""

from .adherence import (
    AdherenceScore,
    adherence_score,
    derangement,
    make_nonmatching,
    score_from_distances,
)
from .aemb import EmbeddingMatrix, read_embeddings, write_embeddings
from .dataset import (
    PairSet,
    Project,
    is_silent,
    load_collection,
    load_project,
    mix_stems,
    sample_pairs,
    split_projects,
)
from .embedding import (
    AudioWindow,
    BuiltinLogMelEmbedder,
    EmbedderSpec,
    builtin_embed,
    embed_window,
    get_embedder,
)
from .errors import (
    AdherenceError,
    ConfigError,
    DataError,
    InsufficientWindowsError,
    MathDomainError,
    UndefinedScoreError,
)
from .fusion import fuse_batch, fuse_concat, fuse_mix, fuse_pair, fuse_sum
from .harness import (
    EvalReport,
    RunConfig,
    run_experiment,
    run_experiment1,
    run_experiment2,
    run_experiment3,
)
from .metrics import (
    GaussianStats,
    KernelParams,
    distance,
    frechet_distance,
    gaussian_stats,
    mmd2,
)
from .perturb import apply_condition, apply_conditions, pitch_shift, time_shift
from .projection import Projection, apply_projection, fit_projection, identity_projection
from .stats import cles, sign_test, significance_stars

__version__ = "0.1.0"
