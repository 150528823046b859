import numpy as np
import pytest
from numpy.testing import assert_allclose

from audio_adherence.aemb import EmbeddingMatrix
from audio_adherence.errors import ConfigError, DataError, MathDomainError
from audio_adherence.projection import (
    apply_projection,
    fit_projection,
    identity_projection,
    projection_from_matrix,
    projection_to_matrix,
)


def test_variance_in_first_coordinate():
    rng = np.random.default_rng(0)
    X = np.zeros((200, 5))
    X[:, 0] = rng.normal(size=200)
    X += 1e-9 * rng.normal(size=X.shape)  # keep effective rank >= 1 component
    proj = fit_projection(X, 1)
    assert abs(proj.explained_variance_ratio - 1.0) < 1e-6


def test_full_rank_ratio_is_one():
    X = np.random.default_rng(1).normal(size=(50, 8))
    proj = fit_projection(X, 8)
    assert abs(proj.explained_variance_ratio - 1.0) < 1e-6


def test_isotropic_ratio_matches_eigenvalue_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(10_000, 100))
    proj = fit_projection(X, 10)
    eigvals = np.linalg.eigvalsh(np.cov(X, rowvar=False))
    oracle = eigvals[-10:].sum() / eigvals.sum()
    assert abs(proj.explained_variance_ratio - 0.1) < 0.03
    assert abs(proj.explained_variance_ratio - oracle) < 1e-8


def test_whitening_of_fit_data():
    X = np.random.default_rng(3).normal(size=(300, 12)) @ np.diag(np.arange(1, 13))
    proj = fit_projection(X, 6)
    Y = apply_projection(proj, X)
    assert np.abs(Y.mean(axis=0)).max() < 1e-6
    assert_allclose(Y.var(axis=0, ddof=1), 1.0, atol=1e-4)
    # whitened covariance is the identity
    cov = np.cov(Y, rowvar=False)
    assert np.abs(cov - np.eye(6)).max() < 1e-4


def test_basis_orthonormal():
    X = np.random.default_rng(4).normal(size=(100, 20))
    proj = fit_projection(X, 7)
    gram = proj.basis @ proj.basis.T
    assert np.abs(gram - np.eye(7)).max() < 1e-6


def test_ratio_monotone_in_k():
    X = np.random.default_rng(5).normal(size=(120, 30)) @ np.diag(np.linspace(3, 0.3, 30))
    ratios = [fit_projection(X, k).explained_variance_ratio for k in (1, 5, 10, 20, 29)]
    assert all(a <= b + 1e-12 for a, b in zip(ratios, ratios[1:]))


def test_identity_projection_bit_exact():
    X = np.random.default_rng(6).normal(size=(10, 4)).astype(np.float32)
    matrix = EmbeddingMatrix(data=X, backend_id="t")
    proj = identity_projection(4)
    assert apply_projection(proj, matrix) is matrix
    arr = np.asarray(X)
    assert apply_projection(proj, arr) is arr


def test_mean_vector_maps_to_zero():
    X = np.random.default_rng(7).normal(size=(40, 6))
    proj = fit_projection(X, 3)
    out = apply_projection(proj, X.mean(axis=0)[None, :])
    assert_allclose(out, 0.0, atol=1e-9)


def test_fit_errors():
    X = np.random.default_rng(8).normal(size=(10, 6))
    with pytest.raises(ConfigError):
        fit_projection(X, 10)  # k > rows-1
    with pytest.raises(ConfigError):
        fit_projection(X, 7)  # k > cols
    with pytest.raises(ConfigError):
        fit_projection(X, 0)
    with pytest.raises(MathDomainError, match="zero-variance"):
        fit_projection(np.ones((10, 4)), 2)


def test_rank_deficient_rejected():
    rng = np.random.default_rng(9)
    base = rng.normal(size=(50, 2))
    X = np.concatenate([base, base @ rng.normal(size=(2, 4))], axis=1)  # rank 2
    with pytest.raises(MathDomainError, match="rank"):
        fit_projection(X, 5)


def test_apply_dimension_mismatch():
    X = np.random.default_rng(10).normal(size=(30, 8))
    proj = fit_projection(X, 4)
    with pytest.raises(DataError, match="dimension"):
        apply_projection(proj, np.zeros((5, 9)))
    with pytest.raises(DataError, match="dimension"):
        apply_projection(identity_projection(8), np.zeros((5, 9)))


def test_serialization_roundtrip():
    X = np.random.default_rng(11).normal(size=(60, 10))
    proj = fit_projection(X, 4)
    back = projection_from_matrix(projection_to_matrix(proj))
    assert back.kind == proj.kind
    assert back.input_dim == proj.input_dim
    assert back.explained_variance_ratio == pytest.approx(proj.explained_variance_ratio)
    # container payload is float32
    assert_allclose(back.mean, proj.mean, rtol=1e-6, atol=1e-6)
    assert_allclose(back.basis, proj.basis, rtol=1e-6, atol=1e-6)
    assert_allclose(back.scale, proj.scale, rtol=1e-6, atol=1e-6)
    Y = np.random.default_rng(12).normal(size=(5, 10))
    assert_allclose(apply_projection(back, Y), apply_projection(proj, Y),
                    rtol=1e-4, atol=1e-4)


def test_serialization_roundtrip_identity():
    proj = identity_projection(17)
    back = projection_from_matrix(projection_to_matrix(proj))
    assert back.kind == "NP"
    assert back.input_dim == 17
    X = np.random.default_rng(13).normal(size=(3, 17))
    assert apply_projection(back, X) is X


def test_projection_container_rejects_other_matrices():
    with pytest.raises(DataError):
        projection_from_matrix(EmbeddingMatrix(np.ones((2, 2), np.float32), "vggish"))


def test_ratio_ordering_on_audio_embeddings(mini_corpus, embedder):
    """More components explain strictly more variance on real-ish audio."""
    from audio_adherence.dataset import load_collection, sample_pairs
    from audio_adherence.fusion import fuse_batch

    projects = load_collection(mini_corpus[0])
    pairs = sample_pairs(projects, 120, seed=21, allow_replacement=True)
    emb = fuse_batch("mix", pairs.prompts, pairs.stems, embedder)
    r10 = fit_projection(emb, 10).explained_variance_ratio
    r100 = fit_projection(emb, 100).explained_variance_ratio
    assert r100 > r10
