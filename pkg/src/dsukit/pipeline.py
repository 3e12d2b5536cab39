"""Pipeline orchestration: staged, cached, byte-reproducible runs.

A run executes the configured stages in fixed dependency order:

    select -> train-kmeans -> encode -> dedup -> extend-vocab
           -> build-cpt -> pseudo-st -> build-it -> score

Config is a JSON document; paths inside it resolve relative to the config
file's directory. Every stage draws its seed from the global seed and the
stage name unless an explicit per-stage seed is set, so a run is a pure
function of (config contents, input bytes): rerunning produces
byte-identical artifacts at any worker count.

Caching: each stage records a stamp keyed by the digest of its config,
the global seed, and its input digests. A matching stamp with intact
outputs skips the stage. A matching stamp whose outputs were modified
outside the pipeline is a hard error, not a silent rebuild.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import corpus as corpus_mod
from . import kmeans as kmeans_mod
from . import metrics as metrics_mod
from . import pseudo as pseudo_mod
from . import subset as subset_mod
from . import units as units_mod
from .corpus import (
    ItSource,
    MixtureSpec,
    Phase,
    PromptKind,
    Task,
    apply_corpus_caps,
    asr_cpt_records,
    build_it_set,
    build_mixture,
    load_bitext,
    make_record,
    mt_cpt_records,
    render_prompt,
    write_records,
)
from .embeddings import (
    EmbeddingTable,
    extend_vocab,
    fit_gaussian,
    load_embeddings,
    save_embeddings,
)
from .errors import ConfigError, DataError, DsukitError
from .features import (
    CorpusTag,
    UtteranceRecord,
    read_features,
    read_manifest,
    resolve_feature_path,
    synth_features,
    write_features,
    write_manifest,
)
from .seeding import derive_seed, rng_for
from .units import (
    DsuSequence,
    deduplicate,
    estimate_hours,
    read_unit_corpus,
    render,
    unit_vocabulary,
    write_unit_corpus,
)

log = logging.getLogger(__name__)

CONFIG_VERSION = 1

STAGE_ORDER = (
    "select",
    "train-kmeans",
    "encode",
    "dedup",
    "extend-vocab",
    "build-cpt",
    "pseudo-st",
    "build-it",
    "score",
)

STAGE_DEPS = {
    "select": (),
    "train-kmeans": ("select",),
    "encode": ("select", "train-kmeans"),
    "dedup": ("encode",),
    "extend-vocab": (),
    "build-cpt": ("select", "dedup"),
    "pseudo-st": ("select",),
    "build-it": ("dedup", "pseudo-st"),
    "score": (),
}

STAGE_OUTPUTS = {
    "select": ("subset.jsonl",),
    "train-kmeans": ("codebook.spkm",),
    "encode": ("units.jsonl",),
    "dedup": ("units.dedup.jsonl",),
    "extend-vocab": ("embeddings.spem",),
    "build-cpt": ("cpt.jsonl", "mixture_report.json"),
    "pseudo-st": ("pseudo.direct.jsonl", "pseudo.multiturn.jsonl", "pseudo_report.json"),
    "build-it": ("it.jsonl", "it_report.json"),
    "score": ("scores.json",),
}


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _write_json(path: Path, obj) -> None:
    path.write_text(_canonical(obj) + "\n", encoding="utf-8")


# --- standalone stage bodies --------------------------------------------------


def _rules_from_config(raw) -> list[subset_mod.CapRule]:
    if raw is None:
        return subset_mod.default_quantizer_subset_rules()
    rules = []
    for entry in raw:
        rules.append(subset_mod.CapRule(
            corpus_tag=CorpusTag(entry["corpus"]),
            max_files_per_speaker=entry.get("max_files_per_speaker"),
            target_file_count=entry.get("target_file_count"),
        ))
    return rules


def run_select(manifest_path: Path, rules, seed: int, out_path: Path) -> dict:
    records = read_manifest(manifest_path)
    selected = subset_mod.select_subset(records, rules, seed)
    # keep feature paths valid from the subset's location
    rewritten = []
    for rec in selected:
        resolved = resolve_feature_path(manifest_path, rec)
        rewritten.append(UtteranceRecord(
            utterance_id=rec.utterance_id,
            speaker_id=rec.speaker_id,
            duration_sec=rec.duration_sec,
            transcript=rec.transcript,
            feature_path=str(_relpath(resolved, out_path.parent)),
            corpus_tag=rec.corpus_tag,
            translations=rec.translations,
        ))
    write_manifest(rewritten, out_path)
    return {"input_records": len(records), "selected_records": len(selected)}


def _relpath(target: Path, base: Path) -> Path:
    try:
        return Path(os.path.relpath(target, base))
    except ValueError:  # different drive on Windows; fall back to absolute
        return target


def _feature_stream(subset_path: Path):
    records = read_manifest(subset_path)

    def factory():
        for rec in records:
            yield read_features(resolve_feature_path(subset_path, rec), rec.utterance_id)

    return records, factory


def run_train_kmeans(
    subset_path: Path,
    out_path: Path,
    k: int,
    seed: int,
    max_iters: int = kmeans_mod.DEFAULT_MAX_ITERS,
    tol: float = kmeans_mod.DEFAULT_TOL,
    init: str = "kmeanspp",
    normalize: bool = False,
    minibatch_size: int | None = None,
) -> dict:
    records, factory = _feature_stream(subset_path)
    codebook = kmeans_mod.train_kmeans(
        factory, k=k, max_iters=max_iters, tol=tol, seed=seed, init=init,
        normalize=normalize, minibatch_size=minibatch_size,
        feature_source=str(subset_path.name),
    )
    kmeans_mod.save_codebook(codebook, out_path)
    return {
        "utterances": len(records),
        "k": codebook.k,
        "dim": codebook.dim,
        "iterations_run": codebook.iterations_run,
        "final_inertia": codebook.final_inertia,
    }


def run_encode(subset_path: Path, codebook_path: Path, out_path: Path, workers: int = 1) -> dict:
    codebook = kmeans_mod.load_codebook(codebook_path)
    records = read_manifest(subset_path)

    def encode_one(rec: UtteranceRecord) -> DsuSequence:
        seq = read_features(resolve_feature_path(subset_path, rec), rec.utterance_id)
        return kmeans_mod.assign(codebook, seq)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            seqs = list(pool.map(encode_one, records))  # map() preserves order
    else:
        seqs = [encode_one(rec) for rec in records]
    write_unit_corpus(out_path, seqs)
    return {"utterances": len(seqs), "units": sum(len(s) for s in seqs)}


def run_dedup(in_path: Path, out_path: Path) -> dict:
    seqs = read_unit_corpus(in_path)
    deduped = [deduplicate(s) for s in seqs]
    write_unit_corpus(out_path, deduped)
    return {
        "utterances": len(seqs),
        "units_in": sum(len(s) for s in seqs),
        "units_out": sum(len(s) for s in deduped),
    }


def run_extend_vocab(
    base_path: Path,
    out_path: Path,
    new_token_count: int,
    seed: int,
    scale: float,
    token_base: int = 0,
) -> dict:
    base = load_embeddings(base_path)
    spec = fit_gaussian(base, scale=scale, seed=seed)
    tokens = unit_vocabulary(new_token_count, base=token_base)
    extended = extend_vocab(base, tokens, spec)
    save_embeddings(extended, out_path)
    return {
        "base_vocab": base.vocab_size,
        "added": new_token_count,
        "vocab": extended.vocab_size,
        "dim": extended.dim,
    }


def _units_by_id(units_path: Path) -> dict[str, DsuSequence]:
    return {seq.utterance_id: seq for seq in read_unit_corpus(units_path)}


def run_build_cpt(
    manifest_path: Path,
    units_path: Path,
    bitext_path: Path,
    mixture_cfg: dict,
    seed: int,
    out_records: Path,
    out_report: Path,
) -> dict:
    mixture_cfg = dict(mixture_cfg)
    mixture_cfg.setdefault("seed", seed)
    spec = MixtureSpec.from_json(mixture_cfg)
    if not spec.text_sources:
        spec.text_sources = [("bitext", 1.0)]
    records = apply_corpus_caps(read_manifest(manifest_path), seed=seed)
    units = _units_by_id(units_path)
    pairs = [
        (rec, render(units[rec.utterance_id]))
        for rec in records
        if rec.utterance_id in units
    ]
    speech = asr_cpt_records(pairs)
    text = mt_cpt_records(load_bitext(bitext_path))
    mixed, report = build_mixture({"speech": speech, "bitext": text}, spec)
    write_records(out_records, mixed)
    _write_json(out_report, report.to_json())
    return {
        "records": len(mixed),
        "speech_tokens": report.speech_tokens,
        "text_tokens": report.text_tokens,
        "achieved_speech_fraction": report.achieved_speech_fraction,
        "achieved_dsu_fraction": report.achieved_dsu_fraction,
    }


def run_pseudo_st(
    manifest_path: Path,
    translations_path: Path,
    scores_path: Path,
    target_langs: list[str],
    threshold: float,
    n_direct: int,
    n_multiturn: int,
    seed: int,
    out_direct: Path,
    out_multiturn: Path,
    out_report: Path,
) -> dict:
    records = read_manifest(manifest_path)
    translations = pseudo_mod.load_translations(translations_path)
    scores = pseudo_mod.load_scores(scores_path)
    streams = pseudo_mod.join_pseudo_inputs(records, translations, scores, target_langs)
    filtered = {
        key: pseudo_mod.filter_by_qe(triples, threshold)
        for key, triples in streams.items()
    }
    direct, multiturn, report = pseudo_mod.sample_pseudo_sets(
        filtered, n_direct=n_direct, n_multiturn=n_multiturn, seed=seed
    )

    def dump(path: Path, triples) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in triples:
                fh.write(json.dumps({
                    "id": t.utterance_id,
                    "corpus": t.source_corpus.value,
                    "lang": t.target_lang,
                    "transcript": t.transcript,
                    "translation": t.translation,
                    "qe_score": t.qe_score,
                }, ensure_ascii=False) + "\n")

    dump(out_direct, direct)
    dump(out_multiturn, multiturn)
    payload = report.to_json()
    payload["threshold"] = threshold
    _write_json(out_report, payload)
    return {
        "streams": len(filtered),
        "direct": len(direct),
        "multiturn": len(multiturn),
    }


def _load_pseudo_rows(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def run_build_it(
    manifest_path: Path,
    units_path: Path,
    direct_path: Path,
    multiturn_path: Path,
    counts: dict,
    seed: int,
    out_records: Path,
    out_report: Path,
    exclusions_path: Path | None = None,
) -> dict:
    exclusions: frozenset[str] = frozenset()
    if exclusions_path is not None:
        try:
            raw = Path(exclusions_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read exclusion list {exclusions_path}: {exc}") from exc
        exclusions = frozenset(line for line in raw.splitlines() if line)
    units = _units_by_id(units_path)
    manifest = apply_corpus_caps(read_manifest(manifest_path), seed=seed)

    asr_records = []
    for rec in manifest:
        if rec.utterance_id not in units:
            continue
        text = render_prompt(PromptKind.ASR_IT, {
            "dsu": render(units[rec.utterance_id]),
            "transcript": corpus_mod.normalize_transcript(rec.transcript, rec.corpus_tag),
        })
        asr_records.append(make_record(rec.utterance_id, Phase.IT, Task.ASR, text, ("en", "en")))

    def st_source(name: str, rows: list[dict], kind: PromptKind, task: Task, count: int) -> ItSource:
        records: list[corpus_mod.TrainingRecord] = []
        keys: list[str | None] = []
        for row in rows:
            if row["id"] not in units:
                continue
            fields = {
                "dsu": render(units[row["id"]]),
                "tgt_lang": row["lang"],
                "translation": row["translation"],
            }
            if kind is PromptKind.ST_MULTITURN_IT:
                fields["transcript"] = row["transcript"]
            text = render_prompt(kind, fields)
            records.append(make_record(
                f"{row['id']}:{row['lang']}:{task.value.lower()}",
                Phase.IT, task, text, ("en", row["lang"]),
            ))
            # exclusion list applies to known held-out overlap sources only
            keys.append(row["transcript"] if row["corpus"] == CorpusTag.FLEURS.value else None)
        return ItSource(
            name=name, records=records, count=count,
            transcripts=keys, exclude_transcripts=exclusions,
        )

    sources = [
        ItSource(name="asr", records=asr_records, count=int(counts.get("asr", 0))),
        st_source("st-direct", _load_pseudo_rows(direct_path),
                  PromptKind.ST_DIRECT_IT, Task.ST_DIRECT, int(counts.get("st_direct", 0))),
        st_source("st-multiturn", _load_pseudo_rows(multiturn_path),
                  PromptKind.ST_MULTITURN_IT, Task.ST_MULTITURN, int(counts.get("st_multiturn", 0))),
    ]
    records, report = build_it_set(sources, seed=seed)
    write_records(out_records, records)
    _write_json(out_report, report.to_json())
    return {"records": len(records), **{f"taken_{k}": v for k, v in report.taken.items()}}


def _read_lines(path: Path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def run_score(
    task: str,
    refs_path: Path,
    hyps_path: Path,
    out_path: Path | None = None,
    hyps_b_path: Path | None = None,
    n_resamples: int = 0,
    alpha: float = 0.05,
    seed: int = 0,
) -> dict:
    refs = _read_lines(refs_path)
    hyps = _read_lines(hyps_path)
    if len(refs) != len(hyps):
        raise DataError(
            f"line count mismatch: {len(refs)} references vs {len(hyps)} hypotheses"
        )
    if task == "asr":
        value = metrics_mod.wer([
            metrics_mod.EvalPair(reference=r, hypothesis=h) for r, h in zip(refs, hyps)
        ])
        result = {"metric": "wer", "value": value, "details": {"pairs": len(refs)}}

        def score_fn(rs, hs):
            return -metrics_mod.wer([
                metrics_mod.EvalPair(reference=r, hypothesis=h) for r, h in zip(rs, hs)
            ])
    elif task == "mt":
        value = metrics_mod.bleu(refs, hyps)
        result = {"metric": "bleu", "value": value, "details": {"pairs": len(refs)}}
        score_fn = metrics_mod.bleu_score_fn
    else:
        raise ConfigError(f"unknown score task {task!r}, expected 'asr' or 'mt'")

    if hyps_b_path is not None:
        if n_resamples <= 0:
            raise ConfigError("a second hypothesis file requires --bootstrap N")
        hyps_b = _read_lines(hyps_b_path)
        boot = metrics_mod.paired_bootstrap(
            score_fn, hyps, hyps_b, refs,
            n_resamples=n_resamples, alpha=alpha, seed=seed,
        )
        result["details"]["bootstrap"] = {
            "score_a": boot.score_a,
            "score_b": boot.score_b,
            "wins_a": boot.wins_a,
            "wins_b": boot.wins_b,
            "ties": boot.ties,
            "n_resamples": boot.n_resamples,
            "alpha": boot.alpha,
            "verdict": boot.verdict,
        }
    if out_path is not None:
        _write_json(out_path, result)
    return result


def compute_stats(records: list[UtteranceRecord], seqs: list[DsuSequence] | None = None) -> list[dict]:
    """Per-corpus summary rows: files, speakers, units, estimated hours."""
    units_by_id = {s.utterance_id: s for s in (seqs or [])}
    by_corpus: dict[str, dict] = {}
    for rec in records:
        row = by_corpus.setdefault(rec.corpus_tag.value, {
            "corpus": rec.corpus_tag.value,
            "files": 0,
            "speakers": set(),
            "units": 0,
            "duration_hours": 0.0,
        })
        row["files"] += 1
        row["speakers"].add(rec.speaker_id)
        row["duration_hours"] += rec.duration_sec / 3600.0
        if rec.utterance_id in units_by_id:
            row["units"] += len(units_by_id[rec.utterance_id])
    out = []
    for corpus in sorted(by_corpus):
        row = by_corpus[corpus]
        out.append({
            "corpus": corpus,
            "files": row["files"],
            "speakers": len(row["speakers"]),
            "units": row["units"],
            "estimated_hours": estimate_hours(row["units"]) if row["units"] else 0.0,
            "duration_hours": round(row["duration_hours"], 3),
        })
    return out


# --- config handling ----------------------------------------------------------


def load_config(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config, path.parent


def _stage_map(config: dict) -> dict[str, dict]:
    raw = config.get("stages")
    if raw is None:
        raise ConfigError("config has no 'stages' section")
    if isinstance(raw, list):
        stages: dict[str, dict] = {}
        for entry in raw:
            name = entry.get("name")
            if name is None:
                raise ConfigError("stage block in the list form is missing 'name'")
            if name in stages:
                raise ConfigError(f"stage {name!r} listed twice")
            stages[name] = {k: v for k, v in entry.items() if k != "name"}
    elif isinstance(raw, dict):
        stages = {str(k): dict(v) for k, v in raw.items()}
    else:
        raise ConfigError("'stages' must be an object or a list of stage blocks")
    unknown = sorted(set(stages) - set(STAGE_ORDER))
    if unknown:
        raise ConfigError(f"unknown stages: {unknown}; valid: {list(STAGE_ORDER)}")
    for name, deps in STAGE_DEPS.items():
        if name in stages:
            missing = [d for d in deps if d not in stages]
            if missing:
                raise ConfigError(f"stage {name!r} requires stages {missing}")
    return stages


_REQUIRED_PATH_KEYS = {
    "select": ("manifest",),
    "extend-vocab": ("base_table",),
    "build-cpt": ("bitext",),
    "pseudo-st": ("translations", "scores"),
    "score": ("refs", "hyps"),
}
_OPTIONAL_PATH_KEYS = {
    "build-it": ("fleurs_exclusions",),
    "score": ("hyps_b",),
}


def validate_config(config: dict, config_dir: Path) -> dict[str, dict]:
    version = config.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}, expected {CONFIG_VERSION}")
    if "output_dir" not in config:
        raise ConfigError("config missing 'output_dir'")
    stages = _stage_map(config)
    for name, keys in _REQUIRED_PATH_KEYS.items():
        if name not in stages:
            continue
        for key in keys:
            if key not in stages[name]:
                raise ConfigError(f"stage {name!r} missing required key {key!r}")
            resolved = config_dir / stages[name][key]
            if not resolved.exists():
                raise ConfigError(f"stage {name!r}: {key} path does not exist: {resolved}")
    for name, keys in _OPTIONAL_PATH_KEYS.items():
        if name not in stages:
            continue
        for key in keys:
            if key in stages[name] and not (config_dir / stages[name][key]).exists():
                raise ConfigError(
                    f"stage {name!r}: {key} path does not exist: {config_dir / stages[name][key]}"
                )
    return stages


# --- run orchestration ----------------------------------------------------------


def _stage_seed(config: dict, stage_cfg: dict, name: str) -> int:
    if "seed" in stage_cfg:
        return int(stage_cfg["seed"])
    return derive_seed(int(config.get("seed", 0)), "stage", name)


def _input_digests(name: str, stage_cfg: dict, config_dir: Path, out_dir: Path) -> dict[str, str]:
    digests: dict[str, str] = {}
    for key in _REQUIRED_PATH_KEYS.get(name, ()) + _OPTIONAL_PATH_KEYS.get(name, ()):
        if key in stage_cfg:
            digests[key] = sha256_file(config_dir / stage_cfg[key])
    for dep in STAGE_DEPS[name]:
        for out_name in STAGE_OUTPUTS[dep]:
            digests[f"{dep}/{out_name}"] = sha256_file(out_dir / out_name)
    if name in ("train-kmeans", "encode"):
        subset_path = out_dir / "subset.jsonl"
        for rec in read_manifest(subset_path):
            feature = resolve_feature_path(subset_path, rec)
            digests[f"feature/{rec.utterance_id}"] = sha256_file(feature)
    return digests


def _execute_stage(
    name: str,
    stage_cfg: dict,
    config: dict,
    config_dir: Path,
    out_dir: Path,
    workers: int,
) -> dict:
    seed = _stage_seed(config, stage_cfg, name)
    if name == "select":
        return run_select(
            config_dir / stage_cfg["manifest"],
            _rules_from_config(stage_cfg.get("rules")),
            seed,
            out_dir / "subset.jsonl",
        )
    if name == "train-kmeans":
        return run_train_kmeans(
            out_dir / "subset.jsonl",
            out_dir / "codebook.spkm",
            k=int(stage_cfg.get("k", kmeans_mod.DEFAULT_K)),
            seed=seed,
            max_iters=int(stage_cfg.get("max_iters", kmeans_mod.DEFAULT_MAX_ITERS)),
            tol=float(stage_cfg.get("tol", kmeans_mod.DEFAULT_TOL)),
            init=stage_cfg.get("init", "kmeanspp"),
            normalize=bool(stage_cfg.get("normalize", False)),
            minibatch_size=stage_cfg.get("minibatch_size"),
        )
    if name == "encode":
        return run_encode(
            out_dir / "subset.jsonl",
            out_dir / "codebook.spkm",
            out_dir / "units.jsonl",
            workers=workers,
        )
    if name == "dedup":
        return run_dedup(out_dir / "units.jsonl", out_dir / "units.dedup.jsonl")
    if name == "extend-vocab":
        count = stage_cfg.get("new_tokens")
        if count is None:
            if "train-kmeans" in _stage_map(config):
                count = kmeans_mod.load_codebook(out_dir / "codebook.spkm").k
            else:
                raise ConfigError("extend-vocab needs 'new_tokens' when train-kmeans is absent")
        return run_extend_vocab(
            config_dir / stage_cfg["base_table"],
            out_dir / "embeddings.spem",
            new_token_count=int(count),
            seed=seed,
            scale=float(stage_cfg.get("scale", 1e-5)),
            token_base=int(stage_cfg.get("token_base", 0)),
        )
    if name == "build-cpt":
        return run_build_cpt(
            out_dir / "subset.jsonl",
            out_dir / "units.dedup.jsonl",
            config_dir / stage_cfg["bitext"],
            stage_cfg.get("mixture", {}),
            seed,
            out_dir / "cpt.jsonl",
            out_dir / "mixture_report.json",
        )
    if name == "pseudo-st":
        return run_pseudo_st(
            out_dir / "subset.jsonl",
            config_dir / stage_cfg["translations"],
            config_dir / stage_cfg["scores"],
            target_langs=list(stage_cfg.get("target_langs", ["de"])),
            threshold=float(stage_cfg.get("threshold", pseudo_mod.DEFAULT_QE_THRESHOLD)),
            n_direct=int(stage_cfg.get("n_direct", pseudo_mod.DEFAULT_SET_SIZE)),
            n_multiturn=int(stage_cfg.get("n_multiturn", pseudo_mod.DEFAULT_SET_SIZE)),
            seed=seed,
            out_direct=out_dir / "pseudo.direct.jsonl",
            out_multiturn=out_dir / "pseudo.multiturn.jsonl",
            out_report=out_dir / "pseudo_report.json",
        )
    if name == "build-it":
        exclusions = stage_cfg.get("fleurs_exclusions")
        return run_build_it(
            out_dir / "subset.jsonl",
            out_dir / "units.dedup.jsonl",
            out_dir / "pseudo.direct.jsonl",
            out_dir / "pseudo.multiturn.jsonl",
            counts=stage_cfg.get("counts", {}),
            seed=seed,
            out_records=out_dir / "it.jsonl",
            out_report=out_dir / "it_report.json",
            exclusions_path=(config_dir / exclusions) if exclusions else None,
        )
    if name == "score":
        hyps_b = stage_cfg.get("hyps_b")
        return run_score(
            task=stage_cfg.get("task", "asr"),
            refs_path=config_dir / stage_cfg["refs"],
            hyps_path=config_dir / stage_cfg["hyps"],
            out_path=out_dir / "scores.json",
            hyps_b_path=(config_dir / hyps_b) if hyps_b else None,
            n_resamples=int(stage_cfg.get("bootstrap", 0)),
            alpha=float(stage_cfg.get("alpha", 0.05)),
            seed=seed,
        )
    raise ConfigError(f"unknown stage {name!r}")


def run_pipeline(
    config_path: str | Path,
    workers: int = 1,
    force: bool = False,
    output_dir: str | None = None,
) -> dict:
    """Execute the configured stages; returns the run report (also written
    to <output_dir>/run_report.json). ``output_dir`` redirects the output
    location (same config-relative resolution as the config value); it
    never changes what is computed."""
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    config, config_dir = load_config(config_path)
    stages = validate_config(config, config_dir)
    out_dir = config_dir / (output_dir if output_dir is not None else config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp_dir = out_dir / ".stamps"
    stamp_dir.mkdir(exist_ok=True)

    report: dict = {
        "version": CONFIG_VERSION,
        "seed": int(config.get("seed", 0)),
        "workers": workers,
        "config_digest": hashlib.sha256(_canonical(config).encode("utf-8")).hexdigest(),
        "stages": [],
        "artifacts": {},
    }
    report_path = out_dir / "run_report.json"

    for name in STAGE_ORDER:
        if name not in stages:
            continue
        stage_cfg = stages[name]
        inputs = _input_digests(name, stage_cfg, config_dir, out_dir)
        key = hashlib.sha256(_canonical({
            "stage": name,
            "config": stage_cfg,
            "seed": int(config.get("seed", 0)),
            "inputs": inputs,
        }).encode("utf-8")).hexdigest()
        stamp_path = stamp_dir / f"{name}.json"
        cached = False
        counts: dict = {}
        started = time.perf_counter()
        if not force and stamp_path.exists():
            stamp = json.loads(stamp_path.read_text(encoding="utf-8"))
            if stamp.get("key") == key:
                stale = [
                    out_name for out_name, digest in stamp.get("outputs", {}).items()
                    if not (out_dir / out_name).exists()
                    or sha256_file(out_dir / out_name) != digest
                ]
                if stale:
                    raise DataError(
                        f"stage {name!r}: cached outputs were modified outside the "
                        f"pipeline ({stale}); delete {out_dir} or rerun with force"
                    )
                cached = True
                counts = stamp.get("counts", {})
        if not cached:
            try:
                counts = _execute_stage(name, stage_cfg, config, config_dir, out_dir, workers)
            except DsukitError as exc:
                log.error("stage %s failed: %s", name, exc)
                report["failed_stage"] = name
                report["error"] = str(exc)
                _write_json(report_path, report)
                raise
            outputs = {
                out_name: sha256_file(out_dir / out_name)
                for out_name in STAGE_OUTPUTS[name]
            }
            _write_json(stamp_path, {"key": key, "outputs": outputs, "counts": counts})
        report["stages"].append({
            "name": name,
            "cached": cached,
            "seconds": round(time.perf_counter() - started, 6),
            "counts": counts,
        })
        for out_name in STAGE_OUTPUTS[name]:
            report["artifacts"][out_name] = sha256_file(out_dir / out_name)

    _write_json(report_path, report)
    return report


# --- demo ----------------------------------------------------------------------


DEMO_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123"  # 30 symbols
DEMO_DIM = 8
DEMO_FRAMES_PER_SYMBOL = 4
DEMO_K = 30


def generate_demo(root: str | Path, seed: int = 0) -> Path:
    """Write a synthetic corpus plus a config exercising every stage;
    returns the config path. Deterministic in (root layout, seed)."""
    root = Path(root)
    data = root / "data"
    features = data / "features"
    features.mkdir(parents=True, exist_ok=True)

    rng = rng_for(seed, "demo-corpus")
    corpora = (
        [CorpusTag.CV] * 30 + [CorpusTag.MLS] * 30 + [CorpusTag.VOXPOPULI] * 30
        + [CorpusTag.COVOST2] * 20 + [CorpusTag.FLEURS] * 10
    )
    records: list[UtteranceRecord] = []
    translations_rows: list[dict] = []
    scores_rows: list[dict] = []
    shared_cv_transcript = None
    for index, corpus in enumerate(corpora):
        utt_id = f"utt-{index:04d}"
        length = int(rng.integers(38, 46))
        if corpus is CorpusTag.CV and index % 29 == 0:
            length = 30  # under the 3 s floor on purpose
        symbols = rng.integers(0, len(DEMO_ALPHABET), size=length)
        transcript = "".join(DEMO_ALPHABET[s] for s in symbols)
        if corpus is CorpusTag.CV:
            # a shared transcript spoken by many speakers exercises the cap
            if shared_cv_transcript is None and length != 30:
                shared_cv_transcript = transcript
            elif index % 5 == 0 and shared_cv_transcript is not None and length != 30:
                transcript = shared_cv_transcript
        feat = synth_features(
            transcript=transcript,
            alphabet=DEMO_ALPHABET,
            dim=DEMO_DIM,
            frames_per_symbol=DEMO_FRAMES_PER_SYMBOL,
            noise_sigma=0.01,
            seed=seed,
            utterance_id=utt_id,
        )
        write_features(feat, features / f"{utt_id}.spfe")
        records.append(UtteranceRecord(
            utterance_id=utt_id,
            speaker_id=f"spk-{index % 12:02d}",
            duration_sec=feat.frame_count / feat.frame_rate_hz,
            transcript=transcript,
            feature_path=f"features/{utt_id}.spfe",
            corpus_tag=corpus,
        ))
        translations_rows.append({
            "id": utt_id, "lang": "de", "text": f"de[{transcript}]",
        })
        scores_rows.append({
            "id": utt_id, "lang": "de",
            "score": round(float(rng.uniform(60.0, 100.0)), 3),
        })
    write_manifest(records, data / "manifest.jsonl")

    with open(data / "translations.jsonl", "w", encoding="utf-8") as fh:
        for row in translations_rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    with open(data / "scores.jsonl", "w", encoding="utf-8") as fh:
        for row in scores_rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    with open(data / "bitext.jsonl", "w", encoding="utf-8") as fh:
        for i in range(200):
            fh.write(json.dumps({
                "src_lang": "en", "tgt_lang": "de",
                "src": f"source sentence number {i} for the demo corpus",
                "tgt": f"zielsatz nummer {i} fuer das demo korpus",
            }, ensure_ascii=False) + "\n")

    fleurs = [r for r in records if r.corpus_tag is CorpusTag.FLEURS]
    (data / "fleurs_exclusions.txt").write_text(
        "\n".join(r.transcript for r in fleurs[:2]) + "\n", encoding="utf-8"
    )

    base_rng = rng_for(seed, "demo-base-table")
    base = EmbeddingTable(
        tokens=[f"tok-{i:03d}" for i in range(100)],
        vectors=(base_rng.standard_normal((100, 16)) * 0.02).astype("float32"),
    )
    save_embeddings(base, data / "base_table.spem")

    refs = [records[i].transcript for i in range(20)]
    hyps = list(refs)
    hyps[3] = hyps[3][:-1] + ("a" if hyps[3][-1] != "a" else "b")
    (data / "refs.txt").write_text("\n".join(refs) + "\n", encoding="utf-8")
    (data / "hyps.txt").write_text("\n".join(hyps) + "\n", encoding="utf-8")

    config = {
        "version": CONFIG_VERSION,
        "seed": seed,
        "output_dir": "out",
        "stages": {
            "select": {
                "manifest": "data/manifest.jsonl",
                "rules": [
                    {"corpus": "CoVoST2", "max_files_per_speaker": 4, "target_file_count": 16},
                    {"corpus": "VoxPopuli", "max_files_per_speaker": 250, "target_file_count": 26},
                    {"corpus": "MLS", "target_file_count": 26},
                ],
            },
            # explicit stage seed: converges to the global optimum on this corpus
            "train-kmeans": {"k": DEMO_K, "max_iters": 50, "tol": 1e-6, "seed": 0},
            "encode": {},
            "dedup": {},
            "extend-vocab": {"base_table": "data/base_table.spem", "scale": 1e-5},
            "build-cpt": {
                "bitext": "data/bitext.jsonl",
                "mixture": {
                    "total_token_budget": 3600,
                    "text_sources": [["bitext", 1.0]],
                },
            },
            "pseudo-st": {
                "translations": "data/translations.jsonl",
                "scores": "data/scores.jsonl",
                "target_langs": ["de"],
                "threshold": 85.0,
                "n_direct": 8,
                "n_multiturn": 8,
            },
            "build-it": {
                "counts": {"asr": 40, "st_direct": 10, "st_multiturn": 10},
                "fleurs_exclusions": "data/fleurs_exclusions.txt",
            },
            "score": {"task": "asr", "refs": "data/refs.txt", "hyps": "data/hyps.txt"},
        },
    }
    config_path = root / "demo_config.json"
    _write_json(config_path, config)
    return config_path
