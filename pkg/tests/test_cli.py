import json
import subprocess
import sys

import numpy as np
import pytest

from audio_adherence.aemb import EmbeddingMatrix, read_embeddings, write_embeddings
from audio_adherence.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pairs_dir(mini_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "pairs"
    code = run_cli("pairs", "--collections", mini_corpus[0], "--n-windows", 20,
                   "--seed", 7, "--out", out)
    assert code == 0
    return out


class TestPairs:
    def test_missing_collection_path(self, capsys):
        code = run_cli("pairs", "--collections", "/nonexistent/dir",
                       "--n-windows", 5, "--seed", 1)
        assert code == 3
        assert "/nonexistent/dir" in capsys.readouterr().err

    def test_deterministic_manifest(self, mini_corpus, tmp_path, capsys):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run_cli("pairs", "--collections", mini_corpus[0], "--n-windows", 10,
                       "--seed", 5, "--out", out_a, "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_pairs"] == 10
        assert payload["eligible_windows"] > 0
        assert run_cli("pairs", "--collections", mini_corpus[0], "--n-windows", 10,
                       "--seed", 5, "--out", out_b) == 0
        assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()
        wav = "windows/pair00003_stem.wav"
        assert (out_a / wav).read_bytes() == (out_b / wav).read_bytes()

    def test_insufficient_windows_exit_code(self, mini_corpus, tmp_path, capsys):
        code = run_cli("pairs", "--collections", mini_corpus[0], "--n-windows", 10_000,
                       "--seed", 1, "--out", tmp_path / "x")
        assert code == 3
        assert "insufficient eligible windows" in capsys.readouterr().err


class TestEmbed:
    def test_builtin_mix_dimensions(self, pairs_dir, tmp_path, capsys):
        out = tmp_path / "mix.aemb"
        assert run_cli("embed", "--pairs", pairs_dir, "--fusion", "mix",
                       "--out", out, "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["rows"] == 20
        assert payload["cols"] == 192
        matrix = read_embeddings(out)
        assert matrix.backend_id == "builtin-logmel;fusion=mix"

    def test_conc_doubles_dimensionality(self, pairs_dir, tmp_path, capsys):
        out = tmp_path / "conc.aemb"
        assert run_cli("embed", "--pairs", pairs_dir, "--fusion", "conc",
                       "--out", out, "--json") == 0
        assert json.loads(capsys.readouterr().out)["cols"] == 384

    def test_derange_seed_tagged(self, pairs_dir, tmp_path):
        out = tmp_path / "nm.aemb"
        assert run_cli("embed", "--pairs", pairs_dir, "--fusion", "mix",
                       "--out", out, "--derange-seed", 11) == 0
        assert "derange_seed=11" in read_embeddings(out).backend_id

    def test_external_row_mismatch(self, pairs_dir, tmp_path, capsys):
        bad = tmp_path / "bad.aemb"
        write_embeddings(EmbeddingMatrix(np.zeros((7, 128), np.float32), "vggish"), bad)
        code = run_cli("embed", "--pairs", pairs_dir, "--backend", f"external:{bad}",
                       "--fusion", "mix", "--out", tmp_path / "out.aemb")
        assert code == 3
        assert "row/manifest mismatch" in capsys.readouterr().err

    def test_external_fusions(self, pairs_dir, tmp_path, capsys):
        rng = np.random.default_rng(0)
        ext = tmp_path / "ext.aemb"
        write_embeddings(
            EmbeddingMatrix(rng.normal(size=(60, 128)).astype(np.float32), "vggish"), ext
        )
        source = read_embeddings(ext).data
        out = tmp_path / "sum.aemb"
        assert run_cli("embed", "--pairs", pairs_dir, "--backend", f"external:{ext}",
                       "--fusion", "sum", "--out", out) == 0
        fused = read_embeddings(out)
        assert fused.rows == 20
        expected = source[1::3] + source[2::3]
        assert np.allclose(fused.data, expected)

        out_mix = tmp_path / "extmix.aemb"
        assert run_cli("embed", "--pairs", pairs_dir, "--backend", f"external:{ext}",
                       "--fusion", "mix", "--out", out_mix) == 0
        assert np.array_equal(read_embeddings(out_mix).data, source[0::3])


class TestScore:
    def make_embeddings(self, tmp_path):
        rng = np.random.default_rng(1)
        ref = rng.normal(size=(80, 16)).astype(np.float32)
        nm = (rng.normal(size=(80, 16)) + 2.0).astype(np.float32)
        write_embeddings(EmbeddingMatrix(ref, "builtin-logmel;fusion=mix"),
                         tmp_path / "ref.aemb")
        write_embeddings(EmbeddingMatrix(nm, "builtin-logmel;fusion=mix;derange_seed=4"),
                         tmp_path / "nm.aemb")
        return tmp_path / "ref.aemb", tmp_path / "nm.aemb"

    def test_candidate_equals_reference(self, tmp_path, capsys):
        ref, nm = self.make_embeddings(tmp_path)
        assert run_cli("score", "--reference-emb", ref, "--reference-nm-emb", nm,
                       "--candidate-emb", ref, "--metric", "fad") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["score"] == pytest.approx(1.0, abs=1e-9)
        assert payload["seeds"]["derangement"] == 4

    def test_both_metrics_in_bounds(self, tmp_path, capsys):
        ref, nm = self.make_embeddings(tmp_path)
        for metric in ("fad", "mmd"):
            assert run_cli("score", "--reference-emb", ref, "--reference-nm-emb", nm,
                           "--candidate-emb", nm, "--metric", metric,
                           "--projection", "pca10") == 0
            payload = json.loads(capsys.readouterr().out)
            assert -1.0 <= payload["score"] <= 1.0
            assert payload["projection"] == "PCA10"

    def test_undefined_score_exit_code(self, tmp_path, capsys):
        same = np.tile(np.array([[1.0, 2.0]], np.float32), (5, 1))
        for name in ("r", "n", "c"):
            write_embeddings(EmbeddingMatrix(same, "x"), tmp_path / f"{name}.aemb")
        code = run_cli("score", "--reference-emb", tmp_path / "r.aemb",
                       "--reference-nm-emb", tmp_path / "n.aemb",
                       "--candidate-emb", tmp_path / "c.aemb", "--metric", "mmd")
        assert code == 4
        assert "undefined" in capsys.readouterr().err


class TestDerange:
    def test_roundtrip(self, pairs_dir, tmp_path, capsys):
        out = tmp_path / "deranged"
        assert run_cli("derange", "--pairs", pairs_dir, "--seed", 3,
                       "--out", out, "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_pairs"] == 20
        assert (out / "manifest.json").is_file()
        meta = json.loads((out / "manifest.json").read_text())
        for i, entry in enumerate(meta["pairs"]):
            assert entry["perturbation"]["stem_from_pair"] != i


class TestExperimentCommands:
    def write_config(self, path, mini_corpus, **overrides):
        cfg = {
            "collections": [
                {"name": "a", "path": mini_corpus[0]},
                {"name": "b", "path": mini_corpus[1]},
            ],
            "seed": 5,
            "n_windows": 16,
            "metrics": ["fad", "mmd"],
            "fusions": ["mix"],
            "projections": ["np"],
            "n_repeats": 1,
        }
        cfg.update(overrides)
        path.write_text(json.dumps(cfg))
        return path

    def test_exp2_records_grid(self, mini_corpus, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "run.json", mini_corpus)
        out = tmp_path / "results"
        assert run_cli("exp2", "--config", cfg, "--out", out, "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        rows = (out / "records.csv").read_text().strip().splitlines()
        assert len(rows) - 1 == payload["n_records"] == 2 * 2 * 2  # (i,j) x metrics

    def test_invalid_config_exit_code(self, mini_corpus, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "run.json", mini_corpus, metrics=[])
        assert run_cli("exp2", "--config", cfg) == 2
        assert "metric" in capsys.readouterr().err

    def test_exp3_cles_in_range(self, mini_corpus, tmp_path, capsys):
        cfg = self.write_config(tmp_path / "run.json", mini_corpus,
                                conditions=["random", "time"])
        out = tmp_path / "res3"
        assert run_cli("exp3", "--config", cfg, "--out", out, "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["cles_medians"]
        for entry in payload["cles_medians"]:
            assert 0.0 <= entry["median_cles"] <= 1.0


def test_console_entry_point_exists():
    proc = subprocess.run([sys.executable, "-m", "audio_adherence.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "adherence" in proc.stdout


def test_synth_command(tmp_path, capsys):
    assert run_cli("synth", "--out", tmp_path, "--collections", 1, "--projects", 2,
                   "--duration", 7.0, "--seed", 1, "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["collections"]) == 1
