"""Discrete speech unit sequences: dedup, token rendering, strict parsing.

A unit id is a non-negative cluster index. The textual form of id ``i``
with vocabulary offset ``base`` is ``<extra_id_{i + base}>``; sequences
render as token concatenations with no separators. Rendering requires a
deduplicated sequence: raw frame-rate repeats would silently inflate any
token budget computed from the text. Parsing is the exact inverse and
rejects anything that is not a canonical concatenation, reporting the
character offset of the first offending byte.
Unit corpora persist as JSONL, one object per utterance:
``{"id": ..., "ids": [...], "deduplicated": ..., "source_frame_count": ...}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, ParseError, ValidationError

DEFAULT_UNITS_PER_SEC = 35.0

_TOKEN_RE = re.compile(r"<extra_id_(0|[1-9][0-9]*)>")


@dataclass
class DsuSequence:
    """A sequence of unit ids for one utterance."""

    utterance_id: str
    ids: list[int]
    deduplicated: bool = False
    source_frame_count: int | None = None

    def __post_init__(self) -> None:
        for pos, unit in enumerate(self.ids):
            if not isinstance(unit, int) or isinstance(unit, bool) or unit < 0:
                raise ValidationError(
                    f"{self.utterance_id!r}: unit at position {pos} must be a "
                    f"non-negative int, got {unit!r}"
                )
        if self.deduplicated:
            for pos in range(1, len(self.ids)):
                if self.ids[pos] == self.ids[pos - 1]:
                    raise ValidationError(
                        f"{self.utterance_id!r}: adjacent duplicate id {self.ids[pos]} "
                        f"at position {pos} in a sequence marked deduplicated"
                    )
        if self.source_frame_count is None:
            self.source_frame_count = len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)


def deduplicate(seq: DsuSequence) -> DsuSequence:
    """Collapse runs of repeated ids to single occurrences.

    Idempotent; output length never exceeds input length.
    """
    collapsed: list[int] = []
    for unit in seq.ids:
        if not collapsed or collapsed[-1] != unit:
            collapsed.append(unit)
    return DsuSequence(
        utterance_id=seq.utterance_id,
        ids=collapsed,
        deduplicated=True,
        source_frame_count=seq.source_frame_count,
    )


def unit_token(unit_id: int, base: int = 0) -> str:
    if unit_id < 0:
        raise ValidationError(f"unit id must be non-negative, got {unit_id}")
    if unit_id + base < 0:
        raise ValidationError(f"offset id {unit_id} + {base} is negative")
    return f"<extra_id_{unit_id + base}>"


def unit_vocabulary(k: int, base: int = 0) -> list[str]:
    """All k unit token strings, in id order."""
    return [unit_token(i, base) for i in range(k)]


def render(seq: DsuSequence, base: int = 0) -> str:
    if not seq.deduplicated:
        raise ValidationError(
            f"{seq.utterance_id!r}: refusing to render a non-deduplicated "
            f"sequence; deduplicate first"
        )
    return "".join(unit_token(unit, base) for unit in seq.ids)


def parse(text: str, base: int = 0, utterance_id: str = "", k: int | None = None) -> DsuSequence:
    """Inverse of :func:`render`. The whole string must be a canonical
    token concatenation (no separators, no leading zeros in numbers);
    when ``k`` is given every recovered id must lie in [0, k)."""
    ids: list[int] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(
                f"not a unit token at offset {pos}: {text[pos:pos + 20]!r}", offset=pos
            )
        value = int(match.group(1)) - base
        if value < 0:
            raise ParseError(
                f"token id {match.group(1)} at offset {pos} is below base {base}",
                offset=pos,
            )
        if k is not None and value >= k:
            raise ParseError(
                f"unit id {value} at offset {pos} is out of range for k={k}",
                offset=pos,
            )
        ids.append(value)
        pos = match.end()
    return DsuSequence(utterance_id=utterance_id, ids=ids, deduplicated=False)


def count_tokens(text: str) -> int:
    """Number of unit tokens in a rendered string (0 if none).

    Unlike :func:`parse` this does not validate; it counts matches only.
    """
    return len(_TOKEN_RE.findall(text))


def strip_unit_tokens(text: str) -> str:
    """Remove every unit token, leaving the surrounding text."""
    return _TOKEN_RE.sub("", text)


def estimate_hours(total_units: int, units_per_sec: float = DEFAULT_UNITS_PER_SEC) -> float:
    """Audio-hours represented by a unit count, assuming a fixed unit rate
    for non-deduplicated sequences."""
    if units_per_sec <= 0:
        raise ValidationError(f"units_per_sec must be positive, got {units_per_sec}")
    if total_units < 0:
        raise ValidationError(f"total_units must be non-negative, got {total_units}")
    return total_units / units_per_sec / 3600.0


def count_units(seqs) -> int:
    """Total ids across a collection of sequences."""
    return sum(len(seq) for seq in seqs)


def write_unit_corpus(path: str | Path, seqs) -> int:
    """Write sequences as JSONL; returns the number of records written."""
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            fh.write(json.dumps({
                "id": seq.utterance_id,
                "ids": seq.ids,
                "deduplicated": seq.deduplicated,
                "source_frame_count": seq.source_frame_count,
            }, ensure_ascii=False))
            fh.write("\n")
            written += 1
    return written


def read_unit_corpus(path: str | Path) -> list[DsuSequence]:
    path = Path(path)
    seqs: list[DsuSequence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "ids" not in obj:
                raise FormatError(f"{path}:{lineno}: expected an object with id and ids")
            if not isinstance(obj["ids"], list):
                raise FormatError(f"{path}:{lineno}: ids must be an integer array")
            frame_count = obj.get("source_frame_count")
            seqs.append(DsuSequence(
                utterance_id=str(obj["id"]),
                ids=[int(x) for x in obj["ids"]],
                deduplicated=bool(obj.get("deduplicated", False)),
                source_frame_count=int(frame_count) if frame_count is not None else None,
            ))
    return seqs
