"""Orchestration of the three evaluation experiments.

Experiment 1 compares raw distances of matching vs deranged candidate sets
to a matching reference background. Experiment 2 does the same with the
adherence score. Experiment 3 swaps the derangement for graded stem
perturbations (pitch/time shifts) and summarizes sensitivity as CLES.

Every stochastic stage derives its seed from the master seed plus a stage
label, so a run is reproducible record-for-record; repeats are independent
jobs and may execute in parallel without changing any result.
"""

import csv
import io
import json
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .adherence import adherence_score, derangement
from .dataset import (
    DEFAULT_HOP_SECONDS,
    DEFAULT_SILENCE_THRESHOLD_DB,
    DEFAULT_WINDOW_SECONDS,
    load_collection,
    sample_pairs,
    split_projects,
)
from .embedding import BUILTIN_BACKEND, get_embedder
from .errors import ConfigError, MathDomainError
from .fusion import FUSION_METHODS, fuse_batch
from .metrics import METRIC_NAMES, distance
from .perturb import CONDITIONS, iter_conditions
from .projection import apply_projection, fit_projection, identity_projection
from .rng import derive_seed, substream
from .stats import cles, sign_test, significance_stars

EXPERIMENTS = ("exp1", "exp2", "exp3")

RECORD_FIELDS = (
    "experiment",
    "repeat",
    "metric",
    "embedder",
    "fusion",
    "projection",
    "condition",
    "reference_collection",
    "candidate_collection",
    "grouping",
    "d_ref_matching",
    "d_ref_nonmatching",
    "s_matching",
    "s_nonmatching",
)


@dataclass
class CollectionSpec:
    name: str
    path: str
    reference_ids: list | None = None
    candidate_ids: list | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "path": str(self.path)}
        if self.reference_ids is not None:
            d["reference_ids"] = list(self.reference_ids)
        if self.candidate_ids is not None:
            d["candidate_ids"] = list(self.candidate_ids)
        return d


def parse_projection_label(label: str) -> tuple[str, int | None]:
    """Normalize a projection spec: np, pca10, pca100 or pca:<k>."""
    lab = str(label).strip().lower()
    if lab == "np":
        return "NP", None
    if lab.startswith("pca:"):
        k = int(lab.split(":", 1)[1])
    elif lab.startswith("pca"):
        k = int(lab[3:])
    else:
        raise ConfigError(f"unknown projection {label!r}; use np, pca10, pca100 or pca:<k>")
    if k < 1:
        raise ConfigError(f"projection needs k >= 1, got {k}")
    return f"PCA{k}", k


@dataclass
class RunConfig:
    """One experiment run: data, pipeline axes, seeds and execution knobs."""

    collections: list
    seed: int
    n_windows: int = 500
    window_seconds: float = DEFAULT_WINDOW_SECONDS
    hop_seconds: float = DEFAULT_HOP_SECONDS
    metrics: tuple = ("fad", "mmd")
    fusions: tuple = ("mix",)
    projections: tuple = ("np",)
    embedders: tuple = (BUILTIN_BACKEND,)
    conditions: tuple = ("random",)
    n_repeats: int = 5
    n_derangements: int = 1
    mix_gain: float = 1.0
    silence_threshold_db: float = DEFAULT_SILENCE_THRESHOLD_DB
    allow_replacement: bool = False
    threads: int = 1
    out_dir: str | None = None

    _KNOWN_KEYS = {
        "collections", "seed", "n_windows", "window_seconds", "hop_seconds",
        "metrics", "fusions", "projections", "embedders", "conditions",
        "n_repeats", "n_derangements", "mix_gain", "silence_threshold_db",
        "allow_replacement", "threads", "out_dir",
    }

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("a master seed is required for reproducibility")
        if not self.collections:
            raise ConfigError("at least one collection is required")
        if not self.metrics:
            raise ConfigError("at least one metric is required")
        if not self.fusions:
            raise ConfigError("at least one fusion method is required")
        if not self.projections:
            raise ConfigError("at least one projection is required")
        if not self.embedders:
            raise ConfigError("at least one embedder backend is required")
        if not self.conditions:
            raise ConfigError("at least one condition is required")
        for m in self.metrics:
            if m not in METRIC_NAMES:
                raise ConfigError(f"unknown metric {m!r}; expected one of {METRIC_NAMES}")
        for f in self.fusions:
            if f not in FUSION_METHODS:
                raise ConfigError(f"unknown fusion {f!r}; expected one of {FUSION_METHODS}")
        for p in self.projections:
            parse_projection_label(p)
        for b in self.embedders:
            if b != BUILTIN_BACKEND:
                raise ConfigError(
                    f"embedder {b!r} runs in the external extractor; the harness "
                    f"computes embeddings itself and supports only {BUILTIN_BACKEND!r}"
                )
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ConfigError(f"unknown condition {c!r}; expected one of {CONDITIONS}")
        if self.n_windows < 1:
            raise ConfigError("n_windows must be >= 1")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")
        if self.n_derangements < 1:
            raise ConfigError("n_derangements must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - cls._KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in raw:
            raise ConfigError("config is missing 'seed'")
        if "collections" not in raw:
            raise ConfigError("config is missing 'collections'")
        collections = []
        for i, entry in enumerate(raw["collections"]):
            if isinstance(entry, str):
                collections.append(CollectionSpec(name=Path(entry).name, path=entry))
            elif isinstance(entry, dict):
                if "path" not in entry:
                    raise ConfigError(f"collection #{i} is missing 'path'")
                collections.append(CollectionSpec(
                    name=entry.get("name", Path(entry["path"]).name),
                    path=entry["path"],
                    reference_ids=entry.get("reference_ids"),
                    candidate_ids=entry.get("candidate_ids"),
                ))
            else:
                raise ConfigError(f"collection #{i} must be a path or an object")
        kwargs = {k: v for k, v in raw.items() if k not in ("collections",)}
        for key in ("metrics", "fusions", "projections", "embedders", "conditions"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(collections=collections, **kwargs)

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "collections": [c.to_dict() for c in self.collections],
            "seed": self.seed,
            "n_windows": self.n_windows,
            "window_seconds": self.window_seconds,
            "hop_seconds": self.hop_seconds,
            "metrics": list(self.metrics),
            "fusions": list(self.fusions),
            "projections": list(self.projections),
            "embedders": list(self.embedders),
            "conditions": list(self.conditions),
            "n_repeats": self.n_repeats,
            "n_derangements": self.n_derangements,
            "mix_gain": self.mix_gain,
            "silence_threshold_db": self.silence_threshold_db,
            "allow_replacement": self.allow_replacement,
            "threads": self.threads,
            "out_dir": self.out_dir,
        }


@dataclass
class EvalReport:
    experiment: str
    config: dict
    records: list
    group_stats: list
    cles_records: list = field(default_factory=list)
    cles_medians: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def records_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for rec in self.records:
            writer.writerow([
                "" if rec[k] is None else (repr(rec[k]) if isinstance(rec[k], float) else rec[k])
                for k in RECORD_FIELDS
            ])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "records": self.records,
            "group_stats": self.group_stats,
            "cles": self.cles_records,
            "cles_medians": self.cles_medians,
            "meta": self.meta,
        }

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "records.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(self.records_csv_text())
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return out_dir


_scratch = threading.local()


def _pool(name: str, shape, dtype=np.float32) -> np.ndarray:
    """Thread-local reusable buffer; first-touch page faults are costly here."""
    buffers = getattr(_scratch, "buffers", None)
    if buffers is None:
        buffers = _scratch.buffers = {}
    buf = buffers.get(name)
    if buf is None or buf.shape != tuple(shape) or buf.dtype != dtype:
        buf = buffers[name] = np.empty(shape, dtype=dtype)
    return buf


def _embed_sets_for_repeat(cfg: RunConfig, experiment: str, collections, conditions,
                           rep: int) -> dict:
    """Sample, perturb and embed every set of one repeat.

    Each repeat is an independent replication: unless a collection has a
    predefined split, its projects are re-partitioned per repeat. Returns
    {(embedder, fusion, set_key): raw fused embeddings}. Audio lives in
    reused scratch buffers and is consumed set by set; only the (small)
    embedding matrices survive. Deranged variants reuse the matching set's
    per-side embeddings where fusion allows (sum/conc) and re-mix waveforms
    only for early fusion.
    """
    embedders = {b: get_embedder(b) for b in cfg.embedders}
    raw = {}
    need_sides = "sum" in cfg.fusions or "conc" in cfg.fusions
    shape = None

    def embed_matching(set_key, pairs):
        """Embed a matching set; returns per-backend side embeddings."""
        sides = {}
        for backend, emb in embedders.items():
            if "mix" in cfg.fusions:
                raw[(backend, "mix", set_key)] = fuse_batch(
                    "mix", pairs.prompts, pairs.stems, emb, mix_gain=cfg.mix_gain
                )
            if need_sides:
                prompt_emb = emb.embed_batch(pairs.prompts)
                stem_emb = emb.embed_batch(pairs.stems)
                sides[backend] = (prompt_emb, stem_emb)
                if "sum" in cfg.fusions:
                    raw[(backend, "sum", set_key)] = prompt_emb + stem_emb
                if "conc" in cfg.fusions:
                    raw[(backend, "conc", set_key)] = np.concatenate(
                        [prompt_emb, stem_emb], axis=1
                    )
        return sides

    def embed_deranged(set_key, pairs, sides, seed):
        """Embed the derangement of ``pairs`` without materializing it."""
        perm = derangement(len(pairs), substream(seed, "derangement"))
        gathered = None
        for backend, emb in embedders.items():
            if "mix" in cfg.fusions:
                if gathered is None:
                    gathered = _pool("derange", shape)
                    for i, j in enumerate(perm):
                        gathered[i] = pairs.stems[j]
                raw[(backend, "mix", set_key)] = fuse_batch(
                    "mix", pairs.prompts, gathered, emb, mix_gain=cfg.mix_gain
                )
            if need_sides:
                prompt_emb, stem_emb = sides[backend]
                if "sum" in cfg.fusions:
                    raw[(backend, "sum", set_key)] = prompt_emb + stem_emb[perm]
                if "conc" in cfg.fusions:
                    raw[(backend, "conc", set_key)] = np.concatenate(
                        [prompt_emb, stem_emb[perm]], axis=1
                    )

    sampling = dict(
        window_seconds=cfg.window_seconds,
        hop_seconds=cfg.hop_seconds,
        threshold_db=cfg.silence_threshold_db,
        allow_replacement=cfg.allow_replacement,
    )

    for name, projects, spec in collections:
        ref_projects, cand_projects = split_projects(
            projects, derive_seed(cfg.seed, "split", rep), name,
            spec.reference_ids, spec.candidate_ids,
        )
        for side, projects in (("reference", ref_projects), ("candidate", cand_projects)):
            pairs = sample_pairs(
                projects, cfg.n_windows,
                derive_seed(cfg.seed, "rep", rep, "sample", name, side),
                collection=name,
                out_prompts=_pool("prompts", shape) if shape else None,
                out_stems=_pool("stems", shape) if shape else None,
                **sampling,
            )
            shape = pairs.prompts.shape
            if side == "reference":
                sides = embed_matching(("ref", name), pairs)
                if experiment != "exp1":
                    for d in range(cfg.n_derangements):
                        embed_deranged(
                            ("refnm", name, d), pairs, sides,
                            derive_seed(cfg.seed, "rep", rep, "derange-ref", name, d),
                        )
            else:
                sides = embed_matching(("cand", name), pairs)
                if experiment == "exp3":
                    cond_seed = derive_seed(cfg.seed, "rep", rep, "condition", name)
                    plain = [c for c in conditions if c in ("random", "none")]
                    perturbed = [c for c in conditions if c not in ("random", "none")]
                    for cond in plain:
                        if cond == "none":
                            for backend in cfg.embedders:
                                for fus in cfg.fusions:
                                    raw[(backend, fus, ("candnm", name, "none"))] = raw[
                                        (backend, fus, ("cand", name))
                                    ]
                        else:
                            embed_deranged(("candnm", name, "random"), pairs, sides,
                                           cond_seed)
                    for cond, variant in iter_conditions(pairs, perturbed, cond_seed):
                        for backend, emb in embedders.items():
                            for fus in cfg.fusions:
                                raw[(backend, fus, ("candnm", name, cond))] = fuse_batch(
                                    fus, variant.prompts, variant.stems, emb,
                                    mix_gain=cfg.mix_gain,
                                )
                        del variant
                else:
                    embed_deranged(
                        ("candnm", name, "random"), pairs, sides,
                        derive_seed(cfg.seed, "rep", rep, "derange-cand", name),
                    )
            del pairs

    return raw


def _run_repeat(cfg: RunConfig, experiment: str, collections, conditions,
                rep: int) -> list:
    names = [name for name, _, _ in collections]
    raw = _embed_sets_for_repeat(cfg, experiment, collections, conditions, rep)

    records = []
    for backend in cfg.embedders:
        for fus in cfg.fusions:
            for proj_spec in cfg.projections:
                proj_label, k = parse_projection_label(proj_spec)
                for ref_name in names:
                    ref_raw = raw[(backend, fus, ("ref", ref_name))]
                    if k is None:
                        proj = identity_projection(ref_raw.shape[1])
                    else:
                        proj = fit_projection(ref_raw, k)
                    ref_emb = apply_projection(proj, ref_raw)
                    refnm_embs = [
                        apply_projection(proj, raw[(backend, fus, ("refnm", ref_name, d))])
                        for d in range(cfg.n_derangements)
                    ] if experiment != "exp1" else []
                    for metric in cfg.metrics:
                        for cand_name in names:
                            cand_emb = apply_projection(
                                proj, raw[(backend, fus, ("cand", cand_name))]
                            )
                            grouping = "within" if ref_name == cand_name else "between"
                            base = {
                                "experiment": experiment,
                                "repeat": rep,
                                "metric": metric,
                                "embedder": backend,
                                "fusion": fus,
                                "projection": proj_label,
                                "reference_collection": ref_name,
                                "candidate_collection": cand_name,
                                "grouping": grouping,
                            }
                            if experiment == "exp1":
                                nm_emb = apply_projection(
                                    proj, raw[(backend, fus, ("candnm", cand_name, "random"))]
                                )
                                records.append(base | {
                                    "condition": "random",
                                    "d_ref_matching": distance(metric, ref_emb, cand_emb),
                                    "d_ref_nonmatching": distance(metric, ref_emb, nm_emb),
                                    "s_matching": None,
                                    "s_nonmatching": None,
                                })
                                continue
                            matching_scores = [
                                adherence_score(metric, ref_emb, nm, cand_emb)
                                for nm in refnm_embs
                            ]
                            s_matching = float(np.mean([s.value for s in matching_scores]))
                            for cond in conditions:
                                cond_emb = apply_projection(
                                    proj, raw[(backend, fus, ("candnm", cand_name, cond))]
                                )
                                cond_scores = [
                                    adherence_score(metric, ref_emb, nm, cond_emb)
                                    for nm in refnm_embs
                                ]
                                records.append(base | {
                                    "condition": cond,
                                    "d_ref_matching": matching_scores[0].d_matching,
                                    "d_ref_nonmatching": cond_scores[0].d_matching,
                                    "s_matching": s_matching,
                                    "s_nonmatching": float(
                                        np.mean([s.value for s in cond_scores])
                                    ),
                                })
    return records


def _group_stats(experiment: str, records: list, cfg: RunConfig, conditions) -> list:
    stats = []
    for grouping in ("within", "between"):
        for backend in cfg.embedders:
            for fus in cfg.fusions:
                for proj_spec in cfg.projections:
                    proj_label, _ = parse_projection_label(proj_spec)
                    for metric in cfg.metrics:
                        for cond in conditions:
                            recs = [
                                r for r in records
                                if r["grouping"] == grouping
                                and r["embedder"] == backend
                                and r["fusion"] == fus
                                and r["projection"] == proj_label
                                and r["metric"] == metric
                                and r["condition"] == cond
                            ]
                            if not recs:
                                continue
                            if experiment == "exp1":
                                diffs = [
                                    r["d_ref_nonmatching"] - r["d_ref_matching"]
                                    for r in recs
                                ]
                            else:
                                diffs = [
                                    r["s_matching"] - r["s_nonmatching"] for r in recs
                                ]
                            entry = {
                                "grouping": grouping,
                                "embedder": backend,
                                "fusion": fus,
                                "projection": proj_label,
                                "metric": metric,
                                "condition": cond,
                                "n_records": len(recs),
                            }
                            try:
                                result = sign_test(diffs, alternative="greater")
                                entry |= result.to_dict()
                                entry["stars"] = significance_stars(result.p_value)
                            except MathDomainError:
                                entry |= {"p_value": None, "n_effective": 0,
                                          "n_positive": 0, "stars": 0}
                            stats.append(entry)
    return stats


def _cles_stats(records: list, cfg: RunConfig, conditions) -> tuple[list, list]:
    per_repeat = []
    medians = []
    for backend in cfg.embedders:
        for fus in cfg.fusions:
            for proj_spec in cfg.projections:
                proj_label, _ = parse_projection_label(proj_spec)
                for metric in cfg.metrics:
                    for cond in conditions:
                        values = []
                        for rep in range(cfg.n_repeats):
                            recs = [
                                r for r in records
                                if r["repeat"] == rep
                                and r["embedder"] == backend
                                and r["fusion"] == fus
                                and r["projection"] == proj_label
                                and r["metric"] == metric
                                and r["condition"] == cond
                            ]
                            if not recs:
                                continue
                            # the effect size conditions on a given reference
                            # set, so only scores sharing one are compared
                            refs = sorted({r["reference_collection"] for r in recs})
                            per_ref = [
                                cles(
                                    [r["s_nonmatching"] for r in recs
                                     if r["reference_collection"] == ref],
                                    [r["s_matching"] for r in recs
                                     if r["reference_collection"] == ref],
                                )
                                for ref in refs
                            ]
                            value = float(np.mean(per_ref))
                            values.append(value)
                            per_repeat.append({
                                "repeat": rep,
                                "embedder": backend,
                                "fusion": fus,
                                "projection": proj_label,
                                "metric": metric,
                                "condition": cond,
                                "cles": value,
                            })
                        if values:
                            medians.append({
                                "embedder": backend,
                                "fusion": fus,
                                "projection": proj_label,
                                "metric": metric,
                                "condition": cond,
                                "median_cles": float(np.median(values)),
                                "n_repeats": len(values),
                            })
    return per_repeat, medians


def run_experiment(cfg: RunConfig, experiment: str) -> EvalReport:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    started = time.time()
    collections = []
    for spec in cfg.collections:
        projects = load_collection(spec.path)
        if len(projects) < 2 and not (spec.reference_ids and spec.candidate_ids):
            raise ConfigError(f"collection {spec.name!r} needs >= 2 projects to split")
        collections.append((spec.name, projects, spec))
    conditions = tuple(cfg.conditions) if experiment == "exp3" else ("random",)

    reps = range(cfg.n_repeats)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            per_rep = list(pool.map(
                lambda r: _run_repeat(cfg, experiment, collections, conditions, r), reps
            ))
    else:
        per_rep = [_run_repeat(cfg, experiment, collections, conditions, r) for r in reps]
    records = [rec for chunk in per_rep for rec in chunk]

    group_stats = _group_stats(experiment, records, cfg, conditions)
    cles_records, cles_medians = ([], [])
    if experiment == "exp3":
        cles_records, cles_medians = _cles_stats(records, cfg, conditions)

    meta = {
        "wall_clock_seconds": time.time() - started,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "collection_sizes": {
            name: {"projects": len(projects)} for name, projects, _ in collections
        },
    }
    return EvalReport(
        experiment=experiment,
        config=cfg.to_dict(),
        records=records,
        group_stats=group_stats,
        cles_records=cles_records,
        cles_medians=cles_medians,
        meta=meta,
    )


def run_experiment1(cfg: RunConfig) -> EvalReport:
    return run_experiment(cfg, "exp1")


def run_experiment2(cfg: RunConfig) -> EvalReport:
    return run_experiment(cfg, "exp2")


def run_experiment3(cfg: RunConfig) -> EvalReport:
    return run_experiment(cfg, "exp3")
