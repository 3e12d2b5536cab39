"""Training-corpus assembly: transcript normalization, dataset caps,
prompt rendering, and token-budgeted mixture sampling.

Template surfaces are pinned byte-for-byte, including their asymmetries:
the continued-pretraining speech prefix is ``Speech:`` with no space while
the instruction variants use ``Speech: ``, and the multi-turn transcript
line is ``English:{TRANSCRIPT}`` with no space. Do not "fix" these.

Instruction prompts wrap the surface in a chat template. The convention,
pinned by fixture: the user turn carries everything up to and including
the target-language label (colon, no trailing space) and the assistant
turn carries the bare target text; multi-turn produces two exchanges,
transcription first.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    CapacityError,
    ConfigError,
    TemplateError,
    ValidationError,
)
from .features import CorpusTag, UtteranceRecord
from .seeding import rng_for
from .units import count_tokens, strip_unit_tokens

CV_MIN_DURATION_SEC = 3.0  # inclusive: a 3.0 s utterance is kept
CV_MAX_SPEAKERS_PER_TRANSCRIPT = 4
MLS_MAX_PER_SPEAKER = 13

DEFAULT_SPEECH_FRACTION = 5.0 / 6.0
DEFAULT_DSU_FRACTION = 0.88

CHAT_TURN_START = "<|im_start|>"
CHAT_TURN_END = "<|im_end|>"

DEFAULT_LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "es": "Spanish",
    "fr": "French",
    "it": "Italian",
    "nl": "Dutch",
    "pl": "Polish",
    "pt": "Portuguese",
    "ro": "Romanian",
    "zh": "Chinese",
}

_GIGASPEECH_TAGS = (
    ("<comma>", ","),
    ("<period>", "."),
    ("<questionmark>", "?"),
    ("<exclamationpoint>", "!"),
)


class PromptKind(str, enum.Enum):
    ASR_CPT = "ASR_CPT"
    MT_CPT = "MT_CPT"
    ASR_IT = "ASR_IT"
    ST_DIRECT_IT = "ST_DIRECT_IT"
    ST_MULTITURN_IT = "ST_MULTITURN_IT"


class Phase(str, enum.Enum):
    CPT = "CPT"
    IT = "IT"


class Task(str, enum.Enum):
    ASR = "ASR"
    MT = "MT"
    ST_DIRECT = "ST_DIRECT"
    ST_MULTITURN = "ST_MULTITURN"
    NER = "NER"
    APE = "APE"
    OTHER_TEXT = "OTHER_TEXT"


@dataclass
class TrainingRecord:
    record_id: str
    phase: Phase
    text: str
    token_count: int
    task: Task
    lang_pair: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValidationError(f"record {self.record_id!r} has empty text")
        if self.token_count < 0:
            raise ValidationError(
                f"record {self.record_id!r} has negative token_count"
            )

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "phase": self.phase.value,
            "text": self.text,
            "token_count": self.token_count,
            "task": self.task.value,
            "lang_pair": list(self.lang_pair) if self.lang_pair else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingRecord":
        pair = obj.get("lang_pair")
        return cls(
            record_id=str(obj["record_id"]),
            phase=Phase(obj["phase"]),
            text=obj["text"],
            token_count=int(obj["token_count"]),
            task=Task(obj["task"]),
            lang_pair=(pair[0], pair[1]) if pair else None,
        )


# --- normalization and caps -------------------------------------------------


def normalize_transcript(text: str, corpus_tag: CorpusTag) -> str:
    """Corpus-specific transcript cleanup.

    GigaSpeech text is lowercased and its punctuation tags become real
    marks with no space before and one space after; every other corpus
    only gets whitespace collapsed.
    """
    if corpus_tag is not CorpusTag.GIGASPEECH:
        return " ".join(text.split())
    out = text.lower()
    for tag, mark in _GIGASPEECH_TAGS:
        out = out.replace(tag, mark)
    out = re.sub(r"\s+([,.?!])", r"\1", out)
    out = re.sub(r"([,.?!])(?=\S)", r"\1 ", out)
    return " ".join(out.split())


def apply_corpus_caps(records: Sequence[UtteranceRecord], seed: int = 0) -> list[UtteranceRecord]:
    """Dataset-specific record capping, deterministic under the seed.

    CV: drop utterances under 3.0 s, then keep at most 4 speakers per
    distinct transcript. MLS: keep at most 13 transcriptions per speaker.
    Other corpora pass through. Input order is preserved.
    """
    cv_kept = [
        r for r in records
        if r.corpus_tag is CorpusTag.CV and r.duration_sec >= CV_MIN_DURATION_SEC
    ]
    speakers_by_transcript: dict[str, list[str]] = {}
    for rec in cv_kept:
        speakers = speakers_by_transcript.setdefault(rec.transcript, [])
        if rec.speaker_id not in speakers:
            speakers.append(rec.speaker_id)
    allowed_cv: set[tuple[str, str]] = set()
    for transcript, speakers in speakers_by_transcript.items():
        chosen = sorted(speakers)
        if len(chosen) > CV_MAX_SPEAKERS_PER_TRANSCRIPT:
            rng = rng_for(seed, "cv-speaker-cap", transcript)
            idx = rng.choice(len(chosen), size=CV_MAX_SPEAKERS_PER_TRANSCRIPT, replace=False)
            chosen = [chosen[i] for i in sorted(idx)]
        allowed_cv.update((transcript, s) for s in chosen)

    mls_ids_by_speaker: dict[str, list[str]] = {}
    for rec in records:
        if rec.corpus_tag is CorpusTag.MLS:
            mls_ids_by_speaker.setdefault(rec.speaker_id, []).append(rec.utterance_id)
    allowed_mls: set[str] = set()
    for speaker, ids in mls_ids_by_speaker.items():
        chosen_ids = sorted(ids)
        if len(chosen_ids) > MLS_MAX_PER_SPEAKER:
            rng = rng_for(seed, "mls-speaker-cap", speaker)
            idx = rng.choice(len(chosen_ids), size=MLS_MAX_PER_SPEAKER, replace=False)
            chosen_ids = [chosen_ids[i] for i in sorted(idx)]
        allowed_mls.update(chosen_ids)

    kept: list[UtteranceRecord] = []
    for rec in records:
        if rec.corpus_tag is CorpusTag.CV:
            if rec.duration_sec < CV_MIN_DURATION_SEC:
                continue
            if (rec.transcript, rec.speaker_id) not in allowed_cv:
                continue
        elif rec.corpus_tag is CorpusTag.MLS:
            if rec.utterance_id not in allowed_mls:
                continue
        kept.append(rec)
    return kept


# --- prompt rendering --------------------------------------------------------


@dataclass
class PromptTemplate:
    kind: PromptKind
    language_names: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_LANGUAGE_NAMES))

    def language_name(self, code: str) -> str:
        try:
            return self.language_names[code]
        except KeyError:
            raise TemplateError(f"no display name configured for language {code!r}") from None


def _require(fields: dict, kind: PromptKind, *names: str) -> list[str]:
    values = []
    for name in names:
        if name not in fields or fields[name] is None:
            raise TemplateError(f"{kind.value} requires field {name!r}")
        values.append(fields[name])
    return values


def render_template(kind: PromptKind, fields: dict, language_names: dict[str, str] | None = None) -> str:
    """The raw prompt surface, target text included (no chat wrapping)."""
    template = PromptTemplate(kind, language_names or dict(DEFAULT_LANGUAGE_NAMES))
    if kind is PromptKind.ASR_CPT:
        dsu, transcript = _require(fields, kind, "dsu", "transcript")
        return f"Speech:{dsu}\nEnglish: {transcript}"
    if kind is PromptKind.MT_CPT:
        src_lang, tgt_lang, source, translation = _require(
            fields, kind, "src_lang", "tgt_lang", "source", "translation"
        )
        src_name = template.language_name(src_lang)
        tgt_name = template.language_name(tgt_lang)
        return f"{src_name}: {source}\n{tgt_name}: {translation}"
    if kind is PromptKind.ASR_IT:
        dsu, transcript = _require(fields, kind, "dsu", "transcript")
        return f"Speech: {dsu}\nEnglish: {transcript}"
    if kind is PromptKind.ST_DIRECT_IT:
        dsu, tgt_lang, translation = _require(fields, kind, "dsu", "tgt_lang", "translation")
        tgt_name = template.language_name(tgt_lang)
        return f"Speech: {dsu}\n{tgt_name}: {translation}"
    if kind is PromptKind.ST_MULTITURN_IT:
        dsu, transcript, tgt_lang, translation = _require(
            fields, kind, "dsu", "transcript", "tgt_lang", "translation"
        )
        tgt_name = template.language_name(tgt_lang)
        # transcript line intentionally has no space after the colon
        return f"Speech: {dsu}\nEnglish:{transcript}\n{tgt_name}: {translation}"
    raise TemplateError(f"unknown prompt kind {kind!r}")


def render_chat(turns: Sequence[tuple[str, str]]) -> str:
    """Wrap (role, content) turns in the chat-template delimiters."""
    return "\n".join(
        f"{CHAT_TURN_START}{role}\n{content}{CHAT_TURN_END}" for role, content in turns
    )


def render_prompt(kind: PromptKind, fields: dict, language_names: dict[str, str] | None = None) -> str:
    """Fully rendered training text: raw surface for CPT kinds, chat
    wrapping for instruction kinds."""
    if kind in (PromptKind.ASR_CPT, PromptKind.MT_CPT):
        return render_template(kind, fields, language_names)
    template = PromptTemplate(kind, language_names or dict(DEFAULT_LANGUAGE_NAMES))
    if kind is PromptKind.ASR_IT:
        dsu, transcript = _require(fields, kind, "dsu", "transcript")
        return render_chat([
            ("user", f"Speech: {dsu}\nEnglish:"),
            ("assistant", transcript),
        ])
    if kind is PromptKind.ST_DIRECT_IT:
        dsu, tgt_lang, translation = _require(fields, kind, "dsu", "tgt_lang", "translation")
        tgt_name = template.language_name(tgt_lang)
        return render_chat([
            ("user", f"Speech: {dsu}\n{tgt_name}:"),
            ("assistant", translation),
        ])
    if kind is PromptKind.ST_MULTITURN_IT:
        dsu, transcript, tgt_lang, translation = _require(
            fields, kind, "dsu", "transcript", "tgt_lang", "translation"
        )
        tgt_name = template.language_name(tgt_lang)
        return render_chat([
            ("user", f"Speech: {dsu}\nEnglish:"),
            ("assistant", transcript),
            ("user", f"{tgt_name}:"),
            ("assistant", translation),
        ])
    raise TemplateError(f"unknown prompt kind {kind!r}")


_CPT_ASR_RE = re.compile(r"\ASpeech:(?P<dsu>(?:<extra_id_\d+>)*)\nEnglish: (?P<transcript>.*)\Z", re.DOTALL)
_CPT_MT_RE = re.compile(r"\A(?P<src_name>[^:\n]+): (?P<source>.*)\n(?P<tgt_name>[^:\n]+): (?P<translation>.*)\Z", re.DOTALL)


def parse_template(kind: PromptKind, text: str) -> dict:
    """Recover the substituted fields from a raw CPT surface."""
    if kind is PromptKind.ASR_CPT:
        match = _CPT_ASR_RE.match(text)
        if not match:
            raise TemplateError("text does not match the ASR_CPT skeleton")
        return {"dsu": match.group("dsu"), "transcript": match.group("transcript")}
    if kind is PromptKind.MT_CPT:
        match = _CPT_MT_RE.match(text)
        if not match:
            raise TemplateError("text does not match the MT_CPT skeleton")
        return {
            "src_name": match.group("src_name"),
            "source": match.group("source"),
            "tgt_name": match.group("tgt_name"),
            "translation": match.group("translation"),
        }
    raise TemplateError(f"parse-back is defined for CPT kinds only, not {kind!r}")


# --- token counting ----------------------------------------------------------


@dataclass
class TokenCount:
    dsu: int
    text: int

    @property
    def total(self) -> int:
        return self.dsu + self.text


def default_token_counter(text: str) -> TokenCount:
    """One token per speech unit plus whitespace-split words for the rest.

    An approximation of a trained subword tokenizer; the mixture builder
    accepts any callable with this signature for exact accounting.
    """
    dsu = count_tokens(text)
    text_tokens = len(strip_unit_tokens(text).split())
    return TokenCount(dsu=dsu, text=text_tokens)


TokenCounter = Callable[[str], TokenCount]


# --- mixture -----------------------------------------------------------------


@dataclass
class MixtureSpec:
    total_token_budget: int
    speech_fraction: float = DEFAULT_SPEECH_FRACTION
    dsu_fraction_within_speech: float = DEFAULT_DSU_FRACTION
    text_sources: list[tuple[str, float]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_token_budget <= 0:
            raise ValidationError(
                f"total_token_budget must be positive, got {self.total_token_budget}"
            )
        if not (0.0 < self.speech_fraction < 1.0):
            raise ValidationError(
                f"speech_fraction must be in (0,1), got {self.speech_fraction}"
            )
        if not (0.0 < self.dsu_fraction_within_speech < 1.0):
            raise ValidationError(
                f"dsu_fraction_within_speech must be in (0,1), got {self.dsu_fraction_within_speech}"
            )
        for name, weight in self.text_sources:
            if weight <= 0:
                raise ValidationError(f"text source {name!r} has non-positive weight {weight}")

    @classmethod
    def from_json(cls, obj: dict) -> "MixtureSpec":
        return cls(
            total_token_budget=int(obj["total_token_budget"]),
            speech_fraction=float(obj.get("speech_fraction", DEFAULT_SPEECH_FRACTION)),
            dsu_fraction_within_speech=float(
                obj.get("dsu_fraction_within_speech", DEFAULT_DSU_FRACTION)
            ),
            text_sources=[(str(n), float(w)) for n, w in obj.get("text_sources", [])],
            seed=int(obj.get("seed", 0)),
        )


@dataclass
class MixtureReport:
    budget_total: int
    budget_speech: float
    budget_text: float
    speech_dsu_tokens: int = 0
    speech_text_tokens: int = 0
    text_tokens: int = 0
    records_per_source: dict[str, int] = field(default_factory=dict)
    tokens_per_source: dict[str, int] = field(default_factory=dict)
    shortfalls: dict[str, int] = field(default_factory=dict)

    @property
    def speech_tokens(self) -> int:
        return self.speech_dsu_tokens + self.speech_text_tokens

    @property
    def total_tokens(self) -> int:
        return self.speech_tokens + self.text_tokens

    @property
    def achieved_speech_fraction(self) -> float:
        return self.speech_tokens / self.total_tokens if self.total_tokens else 0.0

    @property
    def achieved_dsu_fraction(self) -> float:
        return self.speech_dsu_tokens / self.speech_tokens if self.speech_tokens else 0.0

    def to_json(self) -> dict:
        return {
            "budget_total": self.budget_total,
            "budget_speech": self.budget_speech,
            "budget_text": self.budget_text,
            "speech_dsu_tokens": self.speech_dsu_tokens,
            "speech_text_tokens": self.speech_text_tokens,
            "speech_tokens": self.speech_tokens,
            "text_tokens": self.text_tokens,
            "total_tokens": self.total_tokens,
            "achieved_speech_fraction": self.achieved_speech_fraction,
            "achieved_dsu_fraction": self.achieved_dsu_fraction,
            "records_per_source": dict(sorted(self.records_per_source.items())),
            "tokens_per_source": dict(sorted(self.tokens_per_source.items())),
            "shortfalls": dict(sorted(self.shortfalls.items())),
        }


def _shuffled(records: Iterable[TrainingRecord], seed: int, source: str) -> list[TrainingRecord]:
    items = list(records)
    order = rng_for(seed, "mixture-shuffle", source).permutation(len(items))
    return [items[i] for i in order]


def _fill_category(
    pools: dict[str, list[TrainingRecord]],
    weights: dict[str, float],
    budget: float,
    counter: TokenCounter,
    out: list[TrainingRecord],
    report: MixtureReport,
    speech: bool,
) -> None:
    """Water-filling merge: repeatedly take the next record from the source
    with the lowest weighted token intake (name as tie break), until the
    category budget is met or every pool runs dry."""
    taken_tokens = {name: 0 for name in pools}
    cursor = {name: 0 for name in pools}
    achieved = 0
    while achieved < budget:
        candidates = [name for name in pools if cursor[name] < len(pools[name])]
        if not candidates:
            break
        name = min(candidates, key=lambda s: (taken_tokens[s] / weights[s], s))
        record = pools[name][cursor[name]]
        cursor[name] += 1
        counts = counter(record.text)
        record.token_count = counts.total
        out.append(record)
        achieved += counts.total
        taken_tokens[name] += counts.total
        report.records_per_source[name] = report.records_per_source.get(name, 0) + 1
        report.tokens_per_source[name] = report.tokens_per_source.get(name, 0) + counts.total
        if speech:
            report.speech_dsu_tokens += counts.dsu
            report.speech_text_tokens += counts.text
        else:
            report.text_tokens += counts.total
    if achieved < budget:
        key = "speech" if speech else "text"
        report.shortfalls[key] = int(budget - achieved)


def build_mixture(
    sources: dict[str, Iterable[TrainingRecord]],
    spec: MixtureSpec,
    token_counter: TokenCounter | None = None,
) -> tuple[list[TrainingRecord], MixtureReport]:
    """Assemble the token-budgeted CPT mixture.

    Sources named in spec.text_sources fill the text share of the budget
    by weight; every other source is a speech source and shares the speech
    budget uniformly. Sampling is without replacement (seeded shuffle per
    source, then sequential take). Budgets are met by the first record
    that crosses the line; shortfalls are reported, never padded.
    """
    counter = token_counter or default_token_counter
    text_names = [name for name, _ in spec.text_sources]
    if len(set(text_names)) != len(text_names):
        raise ConfigError(f"duplicate text source in spec: {text_names}")
    missing = [name for name in text_names if name not in sources]
    if missing:
        raise ConfigError(f"text sources not provided: {missing}")
    speech_names = sorted(name for name in sources if name not in text_names)
    if not speech_names:
        raise ConfigError("no speech sources: every provided source is a text source")

    pools = {
        name: _shuffled(stream, spec.seed, name) for name, stream in sources.items()
    }
    empty = sorted(name for name, pool in pools.items() if not pool)
    if empty:
        raise CapacityError(f"budget unsatisfiable, empty sources: {empty}")

    budget_speech = spec.total_token_budget * spec.speech_fraction
    budget_text = spec.total_token_budget - budget_speech
    report = MixtureReport(
        budget_total=spec.total_token_budget,
        budget_speech=budget_speech,
        budget_text=budget_text,
    )
    out: list[TrainingRecord] = []
    _fill_category(
        {name: pools[name] for name in speech_names},
        {name: 1.0 for name in speech_names},
        budget_speech, counter, out, report, speech=True,
    )
    _fill_category(
        {name: pools[name] for name in text_names},
        dict(spec.text_sources),
        budget_text, counter, out, report, speech=False,
    )
    return out, report


# --- instruction set assembly ------------------------------------------------


@dataclass
class ItSource:
    """One instruction-tuning task pool.

    transcripts, when given, align with records and drive exclusion-list
    filtering (used for held-out-set overlap removal).
    """

    name: str
    records: list[TrainingRecord]
    count: int
    transcripts: list[str | None] | None = None
    exclude_transcripts: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValidationError(f"source {self.name!r} has negative count {self.count}")
        if self.transcripts is not None and len(self.transcripts) != len(self.records):
            raise ValidationError(
                f"source {self.name!r}: {len(self.transcripts)} transcripts for "
                f"{len(self.records)} records"
            )


@dataclass
class ItReport:
    requested: dict[str, int] = field(default_factory=dict)
    taken: dict[str, int] = field(default_factory=dict)
    excluded: dict[str, int] = field(default_factory=dict)

    @property
    def shortfalls(self) -> dict[str, int]:
        return {
            name: self.requested[name] - self.taken[name]
            for name in self.requested
            if self.taken.get(name, 0) < self.requested[name]
        }

    def to_json(self) -> dict:
        return {
            "requested": dict(sorted(self.requested.items())),
            "taken": dict(sorted(self.taken.items())),
            "excluded": dict(sorted(self.excluded.items())),
            "shortfalls": dict(sorted(self.shortfalls.items())),
        }


def build_it_set(sources: Sequence[ItSource], seed: int = 0) -> tuple[list[TrainingRecord], ItReport]:
    """Sample per-task record counts and interleave round-robin.

    Records whose aligned transcript appears in the source's exclusion set
    are dropped before sampling. Deterministic under the seed.
    """
    names = [s.name for s in sources]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate instruction source names: {names}")
    report = ItReport()
    sampled: list[list[TrainingRecord]] = []
    for source in sources:
        pool = source.records
        excluded = 0
        if source.exclude_transcripts and source.transcripts is not None:
            filtered = []
            for transcript, record in zip(source.transcripts, pool):
                if transcript in source.exclude_transcripts:
                    excluded += 1
                else:
                    filtered.append(record)
            pool = filtered
        take = min(source.count, len(pool))
        order = rng_for(seed, "it-sample", source.name).permutation(len(pool))
        sampled.append([pool[i] for i in sorted(order[:take])])
        report.requested[source.name] = source.count
        report.taken[source.name] = take
        report.excluded[source.name] = excluded

    out: list[TrainingRecord] = []
    cursors = [0] * len(sampled)
    while True:
        progressed = False
        for i, picks in enumerate(sampled):
            if cursors[i] < len(picks):
                out.append(picks[cursors[i]])
                cursors[i] += 1
                progressed = True
        if not progressed:
            break
    return out, report


# --- record adapters ----------------------------------------------------------


def make_record(
    record_id: str,
    phase: Phase,
    task: Task,
    text: str,
    lang_pair: tuple[str, str] | None = None,
    counter: TokenCounter | None = None,
) -> TrainingRecord:
    counts = (counter or default_token_counter)(text)
    return TrainingRecord(
        record_id=record_id,
        phase=phase,
        text=text,
        token_count=counts.total,
        task=task,
        lang_pair=lang_pair,
    )


def asr_cpt_records(
    pairs: Iterable[tuple[UtteranceRecord, str]],
    counter: TokenCounter | None = None,
) -> list[TrainingRecord]:
    """(manifest record, rendered unit string) pairs to CPT records, with
    corpus-appropriate transcript normalization."""
    out = []
    for rec, dsu in pairs:
        text = render_prompt(PromptKind.ASR_CPT, {
            "dsu": dsu,
            "transcript": normalize_transcript(rec.transcript, rec.corpus_tag),
        })
        out.append(make_record(rec.utterance_id, Phase.CPT, Task.ASR, text, ("en", "en"), counter))
    return out


def load_bitext(path: str | Path) -> list[dict]:
    """Bitext JSONL: {src_lang, tgt_lang, src, tgt} per line."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("src_lang", "tgt_lang", "src", "tgt"):
                if key not in obj:
                    raise ConfigError(f"{path}:{lineno}: bitext row missing {key!r}")
            rows.append(obj)
    return rows


def mt_cpt_records(
    rows: Iterable[dict],
    counter: TokenCounter | None = None,
    language_names: dict[str, str] | None = None,
) -> list[TrainingRecord]:
    out = []
    for i, row in enumerate(rows):
        text = render_prompt(PromptKind.MT_CPT, {
            "src_lang": row["src_lang"],
            "tgt_lang": row["tgt_lang"],
            "source": row["src"],
            "translation": row["tgt"],
        }, language_names)
        record_id = str(row.get("id", f"bitext-{i}"))
        out.append(make_record(
            record_id, Phase.CPT, Task.MT, text,
            (row["src_lang"], row["tgt_lang"]), counter,
        ))
    return out


def write_records(path: str | Path, records: Iterable[TrainingRecord]) -> int:
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False))
            fh.write("\n")
            written += 1
    return written


def read_records(path: str | Path) -> list[TrainingRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TrainingRecord.from_json(json.loads(line)))
    return out
