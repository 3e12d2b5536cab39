"""Feature frame I/O, utterance manifests, and synthetic feature generation.

Feature file layout (all integers little-endian):

    bytes 0..3    magic ``SPFE``
    bytes 4..7    format version, u32, currently 1
    bytes 8..11   feature dimension D, u32
    bytes 12..19  frame count T, u64
    bytes 20..23  frame rate in Hz, f32
    bytes 24..    T * D IEEE-754 f32 values, row-major

The 24-byte header carries the frame rate so that a write/read round trip
restores a FeatureSequence exactly. Frames are stored and kept in memory as
float32; arithmetic downstream promotes to float64 where needed.

Manifests are JSON Lines, one utterance per line, with fields ``id``,
``speaker``, ``duration_sec``, ``transcript``, ``translations``,
``feature_path``, ``corpus``. ``translations`` is either null or a map
from language code to ``{"text": ..., "qe_score": ...}``.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import FormatError, TruncationError, ValidationError
from .seeding import rng_for

MAGIC = b"SPFE"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIQf")  # magic, version, dim, frame_count, frame_rate
DEFAULT_FRAME_RATE_HZ = 50.0


class CorpusTag(str, enum.Enum):
    SPGI = "SPGI"
    GIGASPEECH = "GigaSpeech"
    MLS = "MLS"
    VOXPOPULI = "VoxPopuli"
    CV = "CV"
    EUROPARL_ST = "EuroparlST"
    FLEURS = "FLEURS"
    COVOST2 = "CoVoST2"
    OTHER = "OTHER"


@dataclass
class FeatureSequence:
    """Continuous feature frames for one utterance: a T x D float32 matrix."""

    utterance_id: str
    frames: np.ndarray
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise ValidationError(
                f"frames must be a 2-D matrix, got shape {frames.shape}"
            )
        self.frames = frames
        if self.frame_rate_hz <= 0:
            raise ValidationError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class Translation:
    text: str
    qe_score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.qe_score) or not 0.0 <= self.qe_score <= 100.0:
            raise ValidationError(f"qe_score must be finite in [0, 100], got {self.qe_score}")


@dataclass
class UtteranceRecord:
    """One manifest row.

    ``translations`` maps a language code to a Translation; a qe_score is
    present exactly when the translation is.
    """

    utterance_id: str
    speaker_id: str
    duration_sec: float
    transcript: str
    feature_path: str = ""
    corpus_tag: CorpusTag = CorpusTag.OTHER
    translations: dict[str, Translation] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.duration_sec < 0:
            raise ValidationError(
                f"duration_sec must be non-negative, got {self.duration_sec} "
                f"for {self.utterance_id!r}"
            )

    def to_json(self) -> dict:
        return {
            "id": self.utterance_id,
            "speaker": self.speaker_id,
            "duration_sec": self.duration_sec,
            "transcript": self.transcript,
            "translations": {
                lang: {"text": t.text, "qe_score": t.qe_score}
                for lang, t in self.translations.items()
            }
            or None,
            "feature_path": self.feature_path,
            "corpus": self.corpus_tag.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UtteranceRecord":
        try:
            corpus = CorpusTag(obj.get("corpus", "OTHER"))
        except ValueError as exc:
            raise ValidationError(f"unknown corpus tag {obj.get('corpus')!r}") from exc
        raw_tr = obj.get("translations") or {}
        translations = {
            lang: Translation(text=entry["text"], qe_score=float(entry["qe_score"]))
            for lang, entry in raw_tr.items()
        }
        return cls(
            utterance_id=obj["id"],
            speaker_id=obj["speaker"],
            duration_sec=float(obj["duration_sec"]),
            transcript=obj.get("transcript", ""),
            feature_path=obj.get("feature_path", ""),
            corpus_tag=corpus,
            translations=translations,
        )


def write_features(seq: FeatureSequence, path: str | Path) -> None:
    """Write ``seq`` to ``path`` in the binary layout above.

    Validates finiteness before touching the file, so a failed write never
    leaves a partial artifact behind.
    """
    frames = seq.frames
    if frames.size and not np.isfinite(frames).all():
        raise ValidationError(
            f"non-finite value in frames of {seq.utterance_id!r}; refusing to write"
        )
    header = HEADER.pack(
        MAGIC, FORMAT_VERSION, seq.dim, seq.frame_count, np.float32(seq.frame_rate_hz)
    )
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_features(path: str | Path, utterance_id: str | None = None) -> FeatureSequence:
    """Read a feature file written by :func:`write_features`.

    The utterance id is not stored in the file; it defaults to the file
    stem so that files named ``<id>.spfe`` round-trip exactly.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise TruncationError(
                f"{path}: file ends inside the {HEADER.size}-byte header "
                f"(got {len(head)} bytes)",
                offset=len(head),
                expected=HEADER.size,
            )
        magic, version, dim, frame_count, frame_rate = HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        expected = frame_count * dim * 4
        payload = fh.read(expected)
        if len(payload) < expected:
            raise TruncationError(
                f"{path}: payload truncated at byte {HEADER.size + len(payload)}, "
                f"expected {HEADER.size + expected} bytes total",
                offset=HEADER.size + len(payload),
                expected=HEADER.size + expected,
            )
    frames = np.frombuffer(payload, dtype="<f4").reshape(frame_count, dim)
    return FeatureSequence(
        utterance_id=utterance_id if utterance_id is not None else path.stem,
        frames=frames.copy(),
        frame_rate_hz=float(frame_rate),
    )


def anchor_vectors(alphabet: Iterable[str], dim: int, seed: int) -> dict[str, np.ndarray]:
    """Unit-norm anchor vector per symbol, a pure function of (seed, index).

    Each anchor is drawn from a PCG64 generator seeded with the pair
    (seed, symbol index), then normalized. Fixed algorithm: changing it
    would silently re-key every synthetic corpus, so treat the draw order
    (dim standard normals, then L2 normalization) as part of the format.
    """
    anchors: dict[str, np.ndarray] = {}
    for index, symbol in enumerate(alphabet):
        if symbol in anchors:
            raise ValidationError(f"duplicate symbol {symbol!r} in alphabet")
        rng = rng_for(seed, "anchor", index)
        vec = rng.standard_normal(dim)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # unreachable for dim >= 1, guarded anyway
            raise ValidationError("degenerate zero anchor")
        anchors[symbol] = (vec / norm).astype(np.float32)
    return anchors


def synth_features(
    transcript: str,
    alphabet: Iterable[str],
    dim: int,
    frames_per_symbol: int,
    noise_sigma: float,
    seed: int,
    utterance_id: str = "synthetic",
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ,
) -> FeatureSequence:
    """Deterministic synthetic features: per transcript symbol, repeat its
    anchor vector ``frames_per_symbol`` times and add Gaussian noise of
    scale ``noise_sigma``.

    Pure in all arguments: two calls with identical inputs return
    bit-identical frames.
    """
    if dim < 1:
        raise ValidationError(f"dim must be positive, got {dim}")
    if frames_per_symbol < 1:
        raise ValidationError(f"frames_per_symbol must be positive, got {frames_per_symbol}")
    if noise_sigma < 0:
        raise ValidationError(f"noise_sigma must be non-negative, got {noise_sigma}")
    anchors = anchor_vectors(alphabet, dim, seed)
    for symbol in transcript:
        if symbol not in anchors:
            raise ValidationError(f"transcript symbol {symbol!r} not in alphabet")
    total = len(transcript) * frames_per_symbol
    frames = np.empty((total, dim), dtype=np.float32)
    for i, symbol in enumerate(transcript):
        frames[i * frames_per_symbol : (i + 1) * frames_per_symbol] = anchors[symbol]
    if noise_sigma > 0 and total:
        noise_rng = rng_for(seed, "noise", utterance_id, transcript)
        noise = noise_rng.standard_normal((total, dim)) * noise_sigma
        frames = (frames.astype(np.float64) + noise).astype(np.float32)
    return FeatureSequence(
        utterance_id=utterance_id, frames=frames, frame_rate_hz=frame_rate_hz
    )


def write_manifest(records: Iterable[UtteranceRecord], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_manifest(path: str | Path) -> list[UtteranceRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(UtteranceRecord.from_json(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest line: {exc}") from exc
    return records


def iter_manifest(path: str | Path) -> Iterator[UtteranceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield UtteranceRecord.from_json(json.loads(line))
            except (KeyError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest line: {exc}") from exc


def resolve_feature_path(manifest_path: str | Path, record: UtteranceRecord) -> Path:
    """Feature paths may be relative to the manifest's directory."""
    p = Path(record.feature_path)
    if p.is_absolute():
        return p
    return Path(manifest_path).parent / p
