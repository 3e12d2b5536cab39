"""Embedding-table extension with Gaussian-initialized rows.

New token rows are drawn from N(mean, scale * C) where mean is the
column-wise average of the existing rows and C is their population
covariance (divisor V, not V-1; at LM vocabulary sizes the difference is
negligible, and the population form is pinned for reproducibility).

Sampling uses a Cholesky factor. Rank-deficient covariance gets additive
diagonal jitter of 1e-10 * trace/d, escalated tenfold up to 3 retries;
if factorization still fails the sampler falls back to the diagonal of
the covariance with a logged warning. A zero covariance therefore yields
the mean exactly.

Table file layout (little-endian): magic ``SPEM``, version u32 = 1,
V u64, d u32, then V token strings each as u32 byte length + UTF-8 bytes,
then V*d f32 row-major matrix.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, FormatError, TruncationError, ValidationError
from .seeding import rng_for

log = logging.getLogger(__name__)

EMBED_MAGIC = b"SPEM"
EMBED_VERSION = 1
_EM_HEADER = struct.Struct("<4sIQI")

DEFAULT_INIT_SCALE = 1e-5
_JITTER_BASE = 1e-10
_JITTER_RETRIES = 3


@dataclass
class EmbeddingTable:
    """Ordered token strings plus a float32 V x d vector matrix."""

    tokens: list[str]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {vectors.shape}")
        if len(self.tokens) != vectors.shape[0]:
            raise ValidationError(
                f"{len(self.tokens)} tokens but {vectors.shape[0]} vector rows"
            )
        if len(set(self.tokens)) != len(self.tokens):
            seen: set[str] = set()
            for tok in self.tokens:
                if tok in seen:
                    raise ValidationError(f"duplicate token {tok!r}")
                seen.add(tok)
        if vectors.size and not np.isfinite(vectors).all():
            raise ValidationError("vectors contain non-finite values")
        self.vectors = vectors

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}


@dataclass
class GaussianInitSpec:
    """Parameters of the row-initialization distribution."""

    mean: np.ndarray
    covariance: np.ndarray
    scale: float = DEFAULT_INIT_SCALE
    seed: int = 0

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValidationError(
                f"shape mismatch: mean {mean.shape}, covariance {cov.shape}"
            )
        if self.scale <= 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")
        if cov.size and float(np.abs(cov - cov.T).max()) > 1e-8:
            raise ValidationError("covariance is not symmetric within 1e-8")
        self.mean = mean
        self.covariance = cov


def fit_gaussian(
    table: EmbeddingTable, scale: float = DEFAULT_INIT_SCALE, seed: int = 0
) -> GaussianInitSpec:
    """Fit the init distribution to a table's existing rows."""
    if table.vocab_size < 2:
        raise CapacityError(
            f"need at least 2 rows to fit a covariance, got {table.vocab_size}"
        )
    rows = table.vectors.astype(np.float64)
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = scale * (centered.T @ centered) / rows.shape[0]
    cov = (cov + cov.T) / 2.0  # exact symmetry despite fp summation order
    return GaussianInitSpec(mean=mean, covariance=cov, scale=scale, seed=seed)


def _sampling_factor(cov: np.ndarray) -> np.ndarray:
    jitter = _JITTER_BASE * (np.trace(cov) / cov.shape[0] if cov.shape[0] else 0.0)
    attempt = cov
    for _ in range(_JITTER_RETRIES + 1):
        try:
            return np.linalg.cholesky(attempt)
        except np.linalg.LinAlgError:
            attempt = cov + jitter * np.eye(cov.shape[0])
            jitter *= 10.0
    log.warning(
        "covariance not factorizable after %d jitter retries; "
        "falling back to its diagonal", _JITTER_RETRIES,
    )
    return np.diag(np.sqrt(np.maximum(np.diag(cov), 0.0)))


def sample_rows(spec: GaussianInitSpec, n: int) -> np.ndarray:
    """Draw n i.i.d. rows mean + L z, deterministic given spec.seed."""
    if n < 0:
        raise ValidationError(f"row count must be non-negative, got {n}")
    factor = _sampling_factor(spec.covariance)
    rng = rng_for(spec.seed, "embed-extend")
    z = rng.standard_normal((n, spec.mean.shape[0]))
    return spec.mean + z @ factor.T


def extend_vocab(
    table: EmbeddingTable, new_tokens: list[str], spec: GaussianInitSpec
) -> EmbeddingTable:
    """Append Gaussian-initialized rows for new tokens.

    Original rows are preserved bit-exactly; a token already present (or
    repeated in new_tokens) is a conflict.
    """
    existing = set(table.tokens)
    fresh: set[str] = set()
    for tok in new_tokens:
        if tok in existing:
            raise ValidationError(f"token {tok!r} already in the vocabulary")
        if tok in fresh:
            raise ValidationError(f"token {tok!r} repeated in the extension list")
        fresh.add(tok)
    if spec.mean.shape[0] != table.dim:
        raise ValidationError(
            f"init spec dimension {spec.mean.shape[0]} != table dimension {table.dim}"
        )
    if not new_tokens:
        return EmbeddingTable(tokens=list(table.tokens), vectors=table.vectors.copy())
    new_rows = sample_rows(spec, len(new_tokens)).astype(np.float32)
    return EmbeddingTable(
        tokens=list(table.tokens) + list(new_tokens),
        vectors=np.concatenate([table.vectors, new_rows], axis=0),
    )


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_EM_HEADER.pack(EMBED_MAGIC, EMBED_VERSION, table.vocab_size, table.dim))
        for tok in table.tokens:
            blob = tok.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
        fh.write(np.ascontiguousarray(table.vectors, dtype="<f4").tobytes())


def load_embeddings(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_EM_HEADER.size)
        if len(head) < _EM_HEADER.size:
            raise TruncationError(
                f"{path}: file ends inside the header",
                offset=len(head),
                expected=_EM_HEADER.size,
            )
        magic, version, vocab_size, dim = _EM_HEADER.unpack(head)
        if magic != EMBED_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBED_MAGIC!r}")
        if version != EMBED_VERSION:
            raise FormatError(f"{path}: unsupported table version {version}")
        tokens: list[str] = []
        for i in range(vocab_size):
            raw = fh.read(4)
            if len(raw) < 4:
                raise TruncationError(
                    f"{path}: token {i} length prefix truncated", offset=0, expected=4
                )
            (tok_len,) = struct.unpack("<I", raw)
            blob = fh.read(tok_len)
            if len(blob) < tok_len:
                raise TruncationError(
                    f"{path}: token {i} bytes truncated", offset=0, expected=tok_len
                )
            tokens.append(blob.decode("utf-8"))
        want = vocab_size * dim * 4
        body = fh.read(want)
        if len(body) < want:
            raise TruncationError(
                f"{path}: vector payload truncated ({len(body)} of {want} bytes)",
                offset=0,
                expected=want,
            )
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after vector payload")
    vectors = np.frombuffer(body, dtype="<f4").reshape(vocab_size, dim).copy()
    return EmbeddingTable(tokens=tokens, vectors=vectors)


def load_plain_embeddings(tokens_path: str | Path, matrix_path: str | Path, dim: int) -> EmbeddingTable:
    """Import adapter for the two-file interchange form: one token per line
    plus a raw little-endian f32 matrix."""
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    tokens = Path(tokens_path).read_text(encoding="utf-8").splitlines()
    raw = Path(matrix_path).read_bytes()
    if len(raw) % (4 * dim) != 0:
        raise FormatError(
            f"{matrix_path}: size {len(raw)} is not a multiple of 4*dim={4 * dim}"
        )
    rows = len(raw) // (4 * dim)
    if rows != len(tokens):
        raise FormatError(
            f"{matrix_path}: {rows} matrix rows but {len(tokens)} tokens in {tokens_path}"
        )
    vectors = np.frombuffer(raw, dtype="<f4").reshape(rows, dim).copy()
    return EmbeddingTable(tokens=tokens, vectors=vectors)
