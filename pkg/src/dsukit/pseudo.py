"""Pseudo-labeled speech translation: QE-threshold filtering and
direct/multi-turn sample selection.

Translations and QE scores come from external files (neural scoring and
translation are out of scope); the JSONL contracts are pinned below so
any scorer can feed the pipeline. The keep rule is score >= threshold:
85.0 survives a threshold of 85, 84.999 does not.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, ValidationError
from .features import CorpusTag, UtteranceRecord
from .seeding import rng_for

log = logging.getLogger(__name__)

DEFAULT_QE_THRESHOLD = 85.0
DEFAULT_SET_SIZE = 60000


@dataclass
class ScoredTriple:
    """One pseudo-labeled example: transcript, translation, QE score."""

    utterance_id: str
    transcript: str
    target_lang: str
    translation: str
    qe_score: float
    source_corpus: CorpusTag = CorpusTag.OTHER

    def __post_init__(self) -> None:
        score = float(self.qe_score)
        if not math.isfinite(score):
            raise ValidationError(f"{self.utterance_id!r}: qe_score must be finite")
        if not (0.0 <= score <= 100.0):
            raise ValidationError(
                f"{self.utterance_id!r}: qe_score {score} outside [0, 100]"
            )
        self.qe_score = score


def filter_by_qe(triples: Iterable[ScoredTriple], threshold: float = DEFAULT_QE_THRESHOLD) -> list[ScoredTriple]:
    """Keep triples scoring at or above the threshold, preserving order.

    Monotone: raising the threshold never adds a triple.
    """
    return [t for t in triples if t.qe_score >= threshold]


@dataclass
class PseudoSampleReport:
    """Per-(corpus, lang) accounting for the sampled subsets."""

    entries: dict[str, dict] = field(default_factory=dict)

    @property
    def total_direct(self) -> int:
        return sum(e["direct_taken"] for e in self.entries.values())

    @property
    def total_multiturn(self) -> int:
        return sum(e["multiturn_taken"] for e in self.entries.values())

    @property
    def shortfalls(self) -> dict[str, dict]:
        return {
            key: entry for key, entry in self.entries.items()
            if entry["direct_taken"] < entry["direct_requested"]
            or entry["multiturn_taken"] < entry["multiturn_requested"]
        }

    def to_json(self) -> dict:
        return {
            "entries": dict(sorted(self.entries.items())),
            "total_direct": self.total_direct,
            "total_multiturn": self.total_multiturn,
        }


def sample_pseudo_sets(
    streams: dict[tuple[str, str], Sequence[ScoredTriple]],
    n_direct: int = DEFAULT_SET_SIZE,
    n_multiturn: int = DEFAULT_SET_SIZE,
    seed: int = 0,
) -> tuple[list[ScoredTriple], list[ScoredTriple], PseudoSampleReport]:
    """Draw disjoint direct and multi-turn subsets per (corpus, lang).

    The direct set gets min(n_direct, available) triples; the multi-turn
    set draws from what remains. Shortfalls are recorded per stream, never
    backfilled from other streams.
    """
    if n_direct < 0 or n_multiturn < 0:
        raise ValidationError(
            f"sample sizes must be non-negative, got {n_direct}, {n_multiturn}"
        )
    direct_out: list[ScoredTriple] = []
    multiturn_out: list[ScoredTriple] = []
    report = PseudoSampleReport()
    for corpus, lang in sorted(streams):
        triples = sorted(streams[(corpus, lang)], key=lambda t: t.utterance_id)
        seen: set[str] = set()
        for triple in triples:
            if triple.utterance_id in seen:
                raise ValidationError(
                    f"stream ({corpus}, {lang}): duplicate utterance_id "
                    f"{triple.utterance_id!r}"
                )
            seen.add(triple.utterance_id)
        order = rng_for(seed, "pseudo-direct", corpus, lang).permutation(len(triples))
        direct_take = min(n_direct, len(triples))
        direct_idx = sorted(order[:direct_take])
        remaining_idx = sorted(order[direct_take:])
        remaining = [triples[i] for i in remaining_idx]
        suborder = rng_for(seed, "pseudo-multiturn", corpus, lang).permutation(len(remaining))
        multiturn_take = min(n_multiturn, len(remaining))
        multiturn_idx = sorted(suborder[:multiturn_take])
        direct_out.extend(triples[i] for i in direct_idx)
        multiturn_out.extend(remaining[i] for i in multiturn_idx)
        report.entries[f"{corpus}/{lang}"] = {
            "available": len(triples),
            "direct_requested": n_direct,
            "direct_taken": direct_take,
            "multiturn_requested": n_multiturn,
            "multiturn_taken": multiturn_take,
        }
        if direct_take < n_direct or multiturn_take < n_multiturn:
            log.warning(
                "stream (%s, %s): shortfall, %d direct + %d multi-turn from %d available",
                corpus, lang, direct_take, multiturn_take, len(triples),
            )
    return direct_out, multiturn_out, report


def load_scores(path: str | Path) -> dict[tuple[str, str], float]:
    """QE scores JSONL: {id, lang, score} per line, keyed (id, lang).

    Scores on a [0, 1] scale (max <= 1.5) are rescaled to [0, 100] with a
    warning; the threshold convention is percentage-based.
    """
    path = Path(path)
    scores: dict[tuple[str, str], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "lang", "score"):
                if key not in obj:
                    raise FormatError(f"{path}:{lineno}: scores row missing {key!r}")
            scores[(str(obj["id"]), str(obj["lang"]))] = float(obj["score"])
    if scores:
        top = max(scores.values())
        if top <= 1.5:
            log.warning(
                "scores in %s look [0, 1]-scaled (max %.4f); rescaling by 100", path, top
            )
            scores = {key: value * 100.0 for key, value in scores.items()}
    return scores


def load_translations(path: str | Path) -> dict[tuple[str, str], str]:
    """Translations JSONL: {id, lang, text} per line, keyed (id, lang)."""
    path = Path(path)
    translations: dict[tuple[str, str], str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "lang", "text"):
                if key not in obj:
                    raise FormatError(f"{path}:{lineno}: translations row missing {key!r}")
            translations[(str(obj["id"]), str(obj["lang"]))] = str(obj["text"])
    return translations


def join_pseudo_inputs(
    records: Iterable[UtteranceRecord],
    translations: dict[tuple[str, str], str],
    scores: dict[tuple[str, str], float],
    target_langs: Sequence[str],
) -> dict[tuple[str, str], list[ScoredTriple]]:
    """Join manifest transcripts with external translations and scores into
    per-(corpus, lang) streams. Records lacking a translation or score for
    a language are skipped (counted in the log)."""
    streams: dict[tuple[str, str], list[ScoredTriple]] = {}
    skipped = 0
    for rec in records:
        for lang in target_langs:
            key = (rec.utterance_id, lang)
            if key not in translations or key not in scores:
                skipped += 1
                continue
            streams.setdefault((rec.corpus_tag.value, lang), []).append(ScoredTriple(
                utterance_id=rec.utterance_id,
                transcript=rec.transcript,
                target_lang=lang,
                translation=translations[key],
                qe_score=scores[key],
                source_corpus=rec.corpus_tag,
            ))
    if skipped:
        log.info("join skipped %d (record, lang) pairs lacking translation or score", skipped)
    return streams
