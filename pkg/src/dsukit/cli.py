"""Command-line entry point.

Subcommands mirror the pipeline stages plus `run` (config-driven pipeline),
`demo` (synthetic corpus + full run), and `stats`. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric error.

Environment: DSUKIT_WORKERS overrides worker count and DSUKIT_OUTPUT_DIR
overrides the run output directory; algorithmic parameters can only come
from flags or config files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .errors import ConfigError, DsukitError
from .features import read_manifest
from .units import read_unit_corpus


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="root random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsukit",
        description="Speech-unit data pipeline: quantization, vocabulary "
                    "extension, corpus mixing, and ASR/MT scoring.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-subset", help="apply collection rules to a manifest")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--rules", type=Path, help="JSON list of cap rules (default: shipped rules)")
    p.add_argument("--out", required=True, type=Path)
    _add_seed(p)

    p = sub.add_parser("train-kmeans", help="train a unit codebook")
    p.add_argument("--manifest", required=True, type=Path, help="feature manifest to train on")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--k", type=int, default=5000)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--init", choices=("kmeanspp", "random"), default="kmeanspp")
    p.add_argument("--normalize", action="store_true",
                   help="standardize features before clustering")
    p.add_argument("--minibatch", type=int, default=None, metavar="SIZE",
                   help="approximate minibatch training with this batch size")
    _add_seed(p)

    p = sub.add_parser("encode", help="assign features to codebook units")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--codebook", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("dedup", help="collapse repeated unit ids")
    p.add_argument("--units", required=True, type=Path, dest="units")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("extend-vocab", help="extend an embedding table with unit tokens")
    p.add_argument("--base", required=True, type=Path, help="base embedding table")
    p.add_argument("--count", required=True, type=int, help="number of unit tokens to add")
    p.add_argument("--scale", type=float, default=1e-5)
    p.add_argument("--token-base", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    _add_seed(p)

    p = sub.add_parser("build-cpt", help="assemble the token-budgeted pretraining mixture")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--units", required=True, type=Path, help="deduplicated unit corpus")
    p.add_argument("--bitext", required=True, type=Path)
    p.add_argument("--spec", required=True, type=Path, help="mixture spec JSON")
    p.add_argument("--out", required=True, type=Path, help="output records JSONL")
    p.add_argument("--report", type=Path, help="mixture report path (default: <out>.report.json)")
    _add_seed(p)

    p = sub.add_parser("pseudo-filter", help="QE-filter and sample pseudo-labeled ST sets")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--translations", required=True, type=Path)
    p.add_argument("--scores", required=True, type=Path)
    p.add_argument("--target-langs", required=True, nargs="+")
    p.add_argument("--threshold", type=float, default=85.0)
    p.add_argument("--n-direct", type=int, default=60000)
    p.add_argument("--n-multiturn", type=int, default=60000)
    p.add_argument("--out-dir", required=True, type=Path)
    _add_seed(p)

    p = sub.add_parser("build-it", help="assemble the instruction-tuning set")
    p.add_argument("--config", required=True, type=Path,
                   help="JSON with manifest/units/pseudo paths and per-task counts")
    _add_seed(p)

    p = sub.add_parser("score", help="score hypotheses against references")
    p.add_argument("--task", required=True, choices=("asr", "mt"))
    p.add_argument("--refs", required=True, type=Path)
    p.add_argument("--hyps", required=True, type=Path)
    p.add_argument("--hyps-b", type=Path, help="second system for paired bootstrap")
    p.add_argument("--bootstrap", type=int, default=0, metavar="N",
                   help="paired bootstrap resamples (requires --hyps-b)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", type=Path, help="also write the JSON result here")
    _add_seed(p)

    p = sub.add_parser("stats", help="per-corpus summary of a manifest (+ unit corpus)")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--units", type=Path)
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("run", help="run the configured pipeline")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--force", action="store_true", help="ignore stage caches")

    p = sub.add_parser("demo", help="generate a synthetic corpus and run everything")
    p.add_argument("--dir", required=True, type=Path)
    p.add_argument("--skip-run", action="store_true", help="only generate, do not run")
    p.add_argument("--workers", type=int, default=1)
    _add_seed(p)

    return parser


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False))


def _workers_from_env(default: int) -> int:
    raw = os.environ.get("DSUKIT_WORKERS")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"DSUKIT_WORKERS must be an integer, got {raw!r}") from None


def _cmd_select(args) -> int:
    rules = None
    if args.rules:
        rules = json.loads(args.rules.read_text(encoding="utf-8"))
    counts = pipeline.run_select(
        args.manifest, pipeline._rules_from_config(rules), args.seed, args.out
    )
    _print_json(counts)
    return 0


def _cmd_train(args) -> int:
    counts = pipeline.run_train_kmeans(
        args.manifest, args.out, k=args.k, seed=args.seed,
        max_iters=args.max_iters, tol=args.tol, init=args.init,
        normalize=args.normalize, minibatch_size=args.minibatch,
    )
    _print_json(counts)
    return 0


def _cmd_encode(args) -> int:
    workers = _workers_from_env(args.workers)
    _print_json(pipeline.run_encode(args.manifest, args.codebook, args.out, workers=workers))
    return 0


def _cmd_dedup(args) -> int:
    _print_json(pipeline.run_dedup(args.units, args.out))
    return 0


def _cmd_extend(args) -> int:
    _print_json(pipeline.run_extend_vocab(
        args.base, args.out, new_token_count=args.count, seed=args.seed,
        scale=args.scale, token_base=args.token_base,
    ))
    return 0


def _cmd_build_cpt(args) -> int:
    spec = json.loads(args.spec.read_text(encoding="utf-8"))
    report = args.report or args.out.with_suffix(args.out.suffix + ".report.json")
    _print_json(pipeline.run_build_cpt(
        args.manifest, args.units, args.bitext, spec, args.seed, args.out, report,
    ))
    return 0


def _cmd_pseudo(args) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _print_json(pipeline.run_pseudo_st(
        args.manifest, args.translations, args.scores,
        target_langs=list(args.target_langs), threshold=args.threshold,
        n_direct=args.n_direct, n_multiturn=args.n_multiturn, seed=args.seed,
        out_direct=args.out_dir / "pseudo.direct.jsonl",
        out_multiturn=args.out_dir / "pseudo.multiturn.jsonl",
        out_report=args.out_dir / "pseudo_report.json",
    ))
    return 0


def _cmd_build_it(args) -> int:
    cfg = json.loads(args.config.read_text(encoding="utf-8"))
    base = args.config.parent
    for key in ("manifest", "units", "direct", "multiturn", "out", "report"):
        if key not in cfg:
            raise ConfigError(f"build-it config missing {key!r}")
    exclusions = cfg.get("fleurs_exclusions")
    _print_json(pipeline.run_build_it(
        base / cfg["manifest"], base / cfg["units"],
        base / cfg["direct"], base / cfg["multiturn"],
        counts=cfg.get("counts", {}),
        seed=int(cfg.get("seed", args.seed)),
        out_records=base / cfg["out"], out_report=base / cfg["report"],
        exclusions_path=(base / exclusions) if exclusions else None,
    ))
    return 0


def _cmd_score(args) -> int:
    result = pipeline.run_score(
        task=args.task, refs_path=args.refs, hyps_path=args.hyps,
        out_path=args.out, hyps_b_path=args.hyps_b,
        n_resamples=args.bootstrap, alpha=args.alpha, seed=args.seed,
    )
    _print_json(result)
    return 0


def _cmd_stats(args) -> int:
    records = read_manifest(args.manifest)
    seqs = read_unit_corpus(args.units) if args.units else None
    rows = pipeline.compute_stats(records, seqs)
    if args.as_json:
        _print_json(rows)
        return 0
    header = f"{'corpus':<12} {'files':>8} {'speakers':>9} {'units':>12} {'est_hours':>10}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(
            f"{row['corpus']:<12} {row['files']:>8} {row['speakers']:>9} "
            f"{row['units']:>12} {row['estimated_hours']:>10.3f}"
        )
    return 0


def _cmd_run(args) -> int:
    workers = _workers_from_env(args.workers)
    report = pipeline.run_pipeline(
        args.config, workers=workers, force=args.force,
        output_dir=os.environ.get("DSUKIT_OUTPUT_DIR"),
    )
    _print_json({
        "stages": [s["name"] + (" (cached)" if s["cached"] else "") for s in report["stages"]],
        "artifacts": report["artifacts"],
    })
    return 0


def _cmd_demo(args) -> int:
    config_path = pipeline.generate_demo(args.dir, seed=args.seed)
    print(f"demo corpus and config written under {args.dir}")
    if args.skip_run:
        print(f"run it with: dsukit run --config {config_path}")
        return 0
    workers = _workers_from_env(args.workers)
    report = pipeline.run_pipeline(
        config_path, workers=workers,
        output_dir=os.environ.get("DSUKIT_OUTPUT_DIR"),
    )
    _print_json({
        "stages": [s["name"] for s in report["stages"]],
        "artifacts": report["artifacts"],
    })
    return 0


_HANDLERS = {
    "select-subset": _cmd_select,
    "train-kmeans": _cmd_train,
    "encode": _cmd_encode,
    "dedup": _cmd_dedup,
    "extend-vocab": _cmd_extend,
    "build-cpt": _cmd_build_cpt,
    "pseudo-filter": _cmd_pseudo,
    "build-it": _cmd_build_it,
    "score": _cmd_score,
    "stats": _cmd_stats,
    "run": _cmd_run,
    "demo": _cmd_demo,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _HANDLERS[args.command](args)
    except DsukitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
