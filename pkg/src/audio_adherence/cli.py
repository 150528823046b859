"""Command-line front end.

Stages are independently scriptable: ``synth`` makes demo collections,
``pairs`` samples a prompt/stem window cache, ``derange`` re-pairs a cache,
``embed`` turns caches (or external extractor output) into AEMB files,
``score`` computes the adherence score from three AEMB files, and
``exp1``/``exp2``/``exp3`` run the full experiments from a JSON config.

Exit codes: 0 success, 2 config error, 3 data error, 4 math-domain error,
1 anything else.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import synth
from .adherence import adherence_score, make_nonmatching
from .aemb import EmbeddingMatrix, backend_tags, read_embeddings, write_embeddings
from .dataset import (
    eligible_grid,
    load_collection,
    load_pairset,
    sample_pairs,
    save_pairset,
    split_projects,
)
from .embedding import BUILTIN_BACKEND, PRETRAINED_DIMS, get_embedder
from .errors import AdherenceError, ConfigError, DataError, MathDomainError
from .fusion import FUSION_METHODS, fuse_batch
from .harness import RunConfig, parse_projection_label, run_experiment
from .metrics import METRIC_NAMES
from .projection import apply_projection, fit_projection, identity_projection

CACHE_ENV_VAR = "ADHERENCE_CACHE_DIR"


def _cache_root() -> Path:
    override = os.environ.get(CACHE_ENV_VAR)
    if override:
        return Path(override)
    return Path.home() / ".cache" / "audio-adherence"


def _emit(args, payload: dict, human_lines) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload))
    else:
        for line in human_lines:
            print(line)


def _cmd_synth(args) -> int:
    out = Path(args.out)
    paths = []
    for i in range(args.collections):
        paths.append(synth.make_collection(
            out, f"collection_{chr(ord('a') + i)}", n_projects=args.projects,
            seed=args.seed + i, duration=args.duration, family=i % 2,
        ))
    _emit(args, {"collections": [str(p) for p in paths]},
          [f"wrote {p}" for p in paths])
    return 0


def _cmd_pairs(args) -> int:
    projects = []
    for path in args.collections:
        if not Path(path).is_dir():
            raise DataError(f"collection path does not exist: {path}")
        projects.extend(load_collection(path))
    if args.side != "all":
        reference, candidate = split_projects(projects, args.seed, "cli")
        projects = reference if args.side == "reference" else candidate
    grid = eligible_grid(projects, args.window_seconds, args.hop_seconds,
                         args.silence_threshold_db)
    pairs = sample_pairs(
        projects, args.n_windows, args.seed,
        window_seconds=args.window_seconds, hop_seconds=args.hop_seconds,
        threshold_db=args.silence_threshold_db,
        allow_replacement=args.allow_replacement,
        collection=",".join(Path(p).name for p in args.collections),
    )
    out = Path(args.out) if args.out else _cache_root() / f"pairs-{args.seed}-{args.n_windows}"
    manifest = save_pairset(pairs, out, include_mix=True)
    payload = {
        "manifest": str(manifest),
        "n_pairs": len(pairs),
        "eligible_windows": len(grid),
        "requested": args.n_windows,
    }
    _emit(args, payload, [
        f"eligible windows: {len(grid)}",
        f"sampled pairs:    {len(pairs)}",
        f"manifest:         {manifest}",
    ])
    return 0


def _cmd_derange(args) -> int:
    pairs = load_pairset(args.pairs)
    deranged = make_nonmatching(pairs, args.seed)
    manifest = save_pairset(deranged, Path(args.out), include_mix=True)
    _emit(args, {"manifest": str(manifest), "n_pairs": len(deranged),
                 "derange_seed": args.seed},
          [f"deranged manifest: {manifest}"])
    return 0


def _external_fused(args, pairs) -> EmbeddingMatrix:
    path = args.backend.split(":", 1)[1]
    matrix = read_embeddings(path)
    n = len(pairs)
    if matrix.rows != 3 * n:
        raise DataError(
            f"row/manifest mismatch: AEMB has {matrix.rows} rows, expected "
            f"{3 * n} (mix/prompt/stem per pair for {n} pairs)"
        )
    base_id = matrix.backend_id.split(";")[0]
    expected = PRETRAINED_DIMS.get(base_id)
    if expected is not None and matrix.cols != expected:
        raise DataError(
            f"backend {base_id!r} declares {expected} dims, file has {matrix.cols}"
        )
    mixes = matrix.data[0::3]
    prompts = matrix.data[1::3]
    stems = matrix.data[2::3]
    if args.derange_seed is not None:
        if args.fusion == "mix":
            raise ConfigError(
                "mix fusion of deranged pairs needs re-mixed audio; run "
                "`derange` on the pairs cache and extract that instead"
            )
        from .adherence import derangement
        from .rng import substream

        perm = derangement(n, substream(args.derange_seed, "derangement"))
        stems = stems[perm]
    if args.fusion == "mix":
        fused = mixes
    elif args.fusion == "sum":
        fused = prompts + stems
    else:
        fused = np.concatenate([prompts, stems], axis=1)
    return EmbeddingMatrix(data=fused, backend_id=matrix.backend_id)


def _cmd_embed(args) -> int:
    pairs = load_pairset(args.pairs)
    if args.backend.startswith("external:"):
        matrix = _external_fused(args, pairs)
        backend_id = matrix.backend_id.split(";")[0]
        fused = matrix.data
    else:
        backend_id = args.backend
        embedder = get_embedder(args.backend)
        if args.derange_seed is not None:
            pairs = make_nonmatching(pairs, args.derange_seed)
        fused = fuse_batch(args.fusion, pairs.prompts, pairs.stems, embedder,
                           mix_gain=args.mix_gain)
    ident = f"{backend_id};fusion={args.fusion}"
    if args.derange_seed is not None:
        ident += f";derange_seed={args.derange_seed}"
    out_matrix = EmbeddingMatrix(data=fused, backend_id=ident)
    write_embeddings(out_matrix, args.out)
    _emit(args, {"out": args.out, "rows": out_matrix.rows, "cols": out_matrix.cols,
                 "backend_id": ident},
          [f"wrote {args.out}: {out_matrix.rows} x {out_matrix.cols} ({ident})"])
    return 0


def _cmd_score(args) -> int:
    reference = read_embeddings(args.reference_emb)
    nonmatching = read_embeddings(args.reference_nm_emb)
    candidate = read_embeddings(args.candidate_emb)
    for other, label in ((nonmatching, "reference-nm"), (candidate, "candidate")):
        if other.cols != reference.cols:
            raise DataError(
                f"dimension mismatch: reference has {reference.cols} cols, "
                f"{label} has {other.cols}"
            )
    proj_label, k = parse_projection_label(args.projection)
    if k is None:
        proj = identity_projection(reference.cols)
    else:
        proj = fit_projection(reference, k)
    ref_emb = apply_projection(proj, reference)
    nm_emb = apply_projection(proj, nonmatching)
    cand_emb = apply_projection(proj, candidate)

    derange_seed = args.seed
    if derange_seed is None:
        tag = backend_tags(nonmatching.backend_id).get("derange_seed")
        derange_seed = int(tag) if tag is not None else None
    result = adherence_score(args.metric, ref_emb, nm_emb, cand_emb,
                             derangement_seed=derange_seed)
    payload = {
        "score": result.value,
        "d_matching": result.d_matching,
        "d_nonmatching": result.d_nonmatching,
        "metric": args.metric,
        "projection": proj_label,
        "seeds": {"derangement": derange_seed},
    }
    print(json.dumps(payload))
    return 0


def _cmd_experiment(args, experiment: str) -> int:
    cfg = RunConfig.from_json_file(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.threads:
        cfg.threads = args.threads
    report = run_experiment(cfg, experiment)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else Path("adherence_out") / experiment
    report.write(out_dir)
    significant = sum(1 for g in report.group_stats if g.get("stars", 0) > 0)
    payload = {
        "experiment": experiment,
        "out_dir": str(out_dir),
        "n_records": len(report.records),
        "n_groups": len(report.group_stats),
        "n_significant_groups": significant,
        "wall_clock_seconds": report.meta["wall_clock_seconds"],
    }
    lines = [
        f"{experiment}: {len(report.records)} records -> {out_dir}/records.csv",
        f"group sign tests: {significant}/{len(report.group_stats)} significant",
    ]
    if experiment == "exp3":
        payload["cles_medians"] = report.cles_medians
        lines += [
            f"  median CLES [{m['metric']}/{m['projection']}/{m['condition']}]: "
            f"{m['median_cles']:.3f}"
            for m in report.cles_medians
        ]
    _emit(args, payload, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adherence",
        description="Distribution-based audio prompt adherence measurement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic demo collections")
    p.add_argument("--out", required=True)
    p.add_argument("--collections", type=int, default=2)
    p.add_argument("--projects", type=int, default=20)
    p.add_argument("--duration", type=float, default=30.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("pairs", help="sample prompt/stem window pairs")
    p.add_argument("--collections", action="append", required=True,
                   help="collection directory (repeatable)")
    p.add_argument("--n-windows", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None,
                   help=f"output directory (default under ${CACHE_ENV_VAR})")
    p.add_argument("--side", choices=("all", "reference", "candidate"), default="all",
                   help="optionally restrict to one half of a seeded project split")
    p.add_argument("--window-seconds", type=float, default=5.0)
    p.add_argument("--hop-seconds", type=float, default=1.0)
    p.add_argument("--silence-threshold-db", type=float, default=-60.0)
    p.add_argument("--allow-replacement", action="store_true")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("derange", help="re-pair a window cache with a derangement")
    p.add_argument("--pairs", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("embed", help="fuse and embed a window cache to AEMB")
    p.add_argument("--pairs", required=True)
    p.add_argument("--backend", default=BUILTIN_BACKEND,
                   help=f"{BUILTIN_BACKEND} or external:<aemb-file>")
    p.add_argument("--fusion", choices=FUSION_METHODS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mix-gain", type=float, default=1.0)
    p.add_argument("--derange-seed", type=int, default=None,
                   help="derange stems before fusion (writes non-matching embeddings)")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("score", help="adherence score from three AEMB files")
    p.add_argument("--reference-emb", required=True)
    p.add_argument("--reference-nm-emb", required=True,
                   help="embeddings of the deranged reference pairs")
    p.add_argument("--candidate-emb", required=True)
    p.add_argument("--metric", choices=METRIC_NAMES, required=True)
    p.add_argument("--projection", default="np")
    p.add_argument("--seed", type=int, default=None,
                   help="derangement seed to record (default: from the nm file)")

    for exp in ("exp1", "exp2", "exp3"):
        p = sub.add_parser(exp, help=f"run experiment {exp[-1]} from a JSON config")
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--json", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "synth": _cmd_synth,
        "pairs": _cmd_pairs,
        "derange": _cmd_derange,
        "embed": _cmd_embed,
        "score": _cmd_score,
    }
    try:
        if args.command in handlers:
            return handlers[args.command](args)
        return _cmd_experiment(args, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MathDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except AdherenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
