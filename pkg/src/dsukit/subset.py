"""Speaker-capped subset selection for quantizer training.

Selection runs per corpus: first every speaker is capped at
``max_files_per_speaker`` via seeded uniform sampling, then the surviving
per-corpus pool is downsampled to ``target_file_count`` when one is set.
Corpora without a rule pass through untouched. Output is sorted by
utterance id so golden-file comparisons stay stable.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .errors import ValidationError
from .features import CorpusTag, UtteranceRecord
from .seeding import rng_for


@dataclass
class CapRule:
    corpus_tag: CorpusTag
    max_files_per_speaker: int | None = None  # None means unlimited
    target_file_count: int | None = None

    def __post_init__(self) -> None:
        if self.max_files_per_speaker is not None and self.max_files_per_speaker < 1:
            raise ValidationError(
                f"max_files_per_speaker must be >= 1, got {self.max_files_per_speaker}"
            )
        if self.target_file_count is not None and self.target_file_count < 1:
            raise ValidationError(
                f"target_file_count must be >= 1, got {self.target_file_count}"
            )


def default_quantizer_subset_rules() -> list[CapRule]:
    """Shipped collection rules for quantizer training.

    CoVoST2 capped at 8 files per speaker targeting 62K files, VoxPopuli at
    250 per speaker targeting 65K, MLS uncapped targeting 107K; together
    234K files.
    """
    return [
        CapRule(CorpusTag.COVOST2, max_files_per_speaker=8, target_file_count=62_000),
        CapRule(CorpusTag.VOXPOPULI, max_files_per_speaker=250, target_file_count=65_000),
        CapRule(CorpusTag.MLS, max_files_per_speaker=None, target_file_count=107_000),
    ]


def _sample_ids(ids: list[str], count: int, rng) -> list[str]:
    # Sort first so the draw depends only on the id set, not input order.
    ordered = sorted(ids)
    if len(ordered) <= count:
        return ordered
    picked = rng.choice(len(ordered), size=count, replace=False)
    return [ordered[i] for i in sorted(picked)]


def select_subset(
    manifest: list[UtteranceRecord], rules: list[CapRule], seed: int
) -> list[UtteranceRecord]:
    """Apply cap rules to a manifest and return the selected records.

    Deterministic in (manifest contents, rules, seed); input order does not
    matter. Raises ValidationError on duplicate utterance ids or on two
    rules naming the same corpus.
    """
    by_id: dict[str, UtteranceRecord] = {}
    for record in manifest:
        if record.utterance_id in by_id:
            raise ValidationError(f"duplicate utterance_id {record.utterance_id!r}")
        by_id[record.utterance_id] = record

    rule_for: dict[CorpusTag, CapRule] = {}
    for rule in rules:
        if rule.corpus_tag in rule_for:
            raise ValidationError(f"multiple rules for corpus {rule.corpus_tag.value}")
        rule_for[rule.corpus_tag] = rule

    by_corpus: dict[CorpusTag, list[UtteranceRecord]] = defaultdict(list)
    for record in by_id.values():
        by_corpus[record.corpus_tag].append(record)

    selected: list[UtteranceRecord] = []
    for corpus in sorted(by_corpus, key=lambda c: c.value):
        records = by_corpus[corpus]
        rule = rule_for.get(corpus)
        if rule is None:
            selected.extend(records)
            continue
        kept_ids: list[str] = []
        if rule.max_files_per_speaker is not None:
            by_speaker: dict[str, list[str]] = defaultdict(list)
            for record in records:
                by_speaker[record.speaker_id].append(record.utterance_id)
            for speaker in sorted(by_speaker):
                rng = rng_for(seed, "speaker-cap", corpus.value, speaker)
                kept_ids.extend(
                    _sample_ids(by_speaker[speaker], rule.max_files_per_speaker, rng)
                )
        else:
            kept_ids = [record.utterance_id for record in records]
        if rule.target_file_count is not None and len(kept_ids) > rule.target_file_count:
            rng = rng_for(seed, "corpus-target", corpus.value)
            kept_ids = _sample_ids(kept_ids, rule.target_file_count, rng)
        selected.extend(by_id[utt_id] for utt_id in kept_ids)

    selected.sort(key=lambda record: record.utterance_id)
    return selected
