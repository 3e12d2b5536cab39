"""K-means quantizer: training, assignment, and codebook persistence.

Training is chunked Lloyd's over float64 accumulators. Input can be a list
of FeatureSequence (held in memory) or a zero-argument callable returning a
fresh iterable per pass, which keeps memory bounded by the chunk size for
corpus-scale runs. Both paths chunk identically, so they produce
bit-identical codebooks for the same frame order.

Conventions pinned here, relied on by tests and downstream stages:

* distance is squared Euclidean; assignment ties resolve to the lowest
  centroid index;
* inertia is the sum of squared distances to assigned centroids and must
  not increase between iterations (NumericError if it does);
* an empty cluster is reseeded to the frame farthest from its currently
  assigned centroid, empties handled in index order;
* ``final_inertia`` is always measured against the returned centroids.

Codebook file layout (little-endian): magic ``SPKM``, version u32 = 1,
k u32, dim u32, k*dim f32 centroids row-major, u32 metadata byte length,
UTF-8 JSON metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    FormatError,
    NumericError,
    TruncationError,
    ValidationError,
)
from .features import FeatureSequence
from .seeding import rng_for
from .units import DsuSequence

CODEBOOK_MAGIC = b"SPKM"
CODEBOOK_VERSION = 1
_CB_HEADER = struct.Struct("<4sIII")

DEFAULT_K = 5000
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-4

CHUNK_FRAMES = 8192  # fixed: chunk boundaries affect float summation order

FrameSource = Iterable[FeatureSequence] | Callable[[], Iterable[FeatureSequence]]


@dataclass
class Codebook:
    """K centroid vectors plus training provenance."""

    centroids: np.ndarray
    iterations_run: int = 0
    final_inertia: float = 0.0
    feature_source: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        centroids = np.asarray(self.centroids, dtype=np.float32)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise ValidationError(f"centroids must be a k x dim matrix with k >= 1, got shape {centroids.shape}")
        if not np.isfinite(centroids).all():
            raise ValidationError("centroids contain non-finite values")
        if self.final_inertia < 0:
            raise ValidationError(f"final_inertia must be non-negative, got {self.final_inertia}")
        self.centroids = centroids

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _iterate(source: FrameSource) -> Iterable[FeatureSequence]:
    return source() if callable(source) else source


def _frame_chunks(source: FrameSource, dim: int | None = None):
    """Yield float64 chunks of up to CHUNK_FRAMES rows, crossing utterance
    boundaries, validating dimension consistency and finiteness."""
    pending: list[np.ndarray] = []
    buffered = 0
    for seq in _iterate(source):
        frames = seq.frames
        if frames.size and not np.isfinite(frames).all():
            raise ValidationError(f"non-finite frame value in {seq.utterance_id!r}")
        if dim is None:
            dim = frames.shape[1]
        elif frames.shape[1] != dim:
            raise ValidationError(
                f"dimension mismatch: {seq.utterance_id!r} has D={frames.shape[1]}, expected {dim}"
            )
        if frames.shape[0] == 0:
            continue
        pending.append(frames)
        buffered += frames.shape[0]
        while buffered >= CHUNK_FRAMES:
            stacked = np.concatenate(pending, axis=0)
            yield stacked[:CHUNK_FRAMES].astype(np.float64)
            rest = stacked[CHUNK_FRAMES:]
            pending = [rest] if rest.size else []
            buffered = rest.shape[0]
    if buffered:
        yield np.concatenate(pending, axis=0).astype(np.float64)


def _survey(source: FrameSource, sample_size: int, seed: int, normalize: bool):
    """First pass: frame count, dimension, seeded uniform sample, and
    (optionally) per-dimension mean/std for normalization."""
    rng = rng_for(seed, "kmeans-sample")
    total = 0
    sample_keys = np.empty(0)
    sample_frames: np.ndarray | None = None
    acc_sum = None
    acc_sqsum = None
    for chunk in _frame_chunks(source, dim=None):
        if sample_frames is None:
            sample_frames = np.empty((0, chunk.shape[1]))
            if normalize:
                acc_sum = np.zeros(chunk.shape[1])
                acc_sqsum = np.zeros(chunk.shape[1])
        total += chunk.shape[0]
        if normalize:
            acc_sum += chunk.sum(axis=0)
            acc_sqsum += (chunk * chunk).sum(axis=0)
        # uniform sample without replacement: keep the frames with the
        # smallest random keys; key stream is per-frame, so the result does
        # not depend on chunk boundaries
        keys = rng.random(chunk.shape[0])
        merged_keys = np.concatenate([sample_keys, keys])
        merged_frames = np.concatenate([sample_frames, chunk], axis=0)
        if merged_keys.shape[0] > sample_size:
            order = np.argsort(merged_keys, kind="stable")[:sample_size]
            merged_keys = merged_keys[order]
            merged_frames = merged_frames[order]
        sample_keys = merged_keys
        sample_frames = merged_frames
    if total == 0 or sample_frames is None:
        raise DataError("empty input: no frames in the training stream")
    order = np.argsort(sample_keys, kind="stable")
    norm_stats = None
    if normalize:
        mean = acc_sum / total
        var = np.maximum(acc_sqsum / total - mean * mean, 0.0)
        norm_stats = (mean, np.sqrt(var) + 1e-8)
    return total, sample_frames[order], norm_stats


def _init_kmeanspp(sample: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = sample.shape[0]
    centers = np.empty((k, sample.shape[1]))
    centers[0] = sample[int(rng.integers(n))]
    d2 = ((sample - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        mass = d2.sum()
        if mass > 0:
            idx = int(rng.choice(n, p=d2 / mass))
        else:
            idx = int(rng.integers(n))  # all remaining points coincide
        centers[j] = sample[idx]
        d2 = np.minimum(d2, ((sample - centers[j]) ** 2).sum(axis=1))
    return centers


def _init_random(sample: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(sample.shape[0], size=k, replace=False)
    return sample[np.sort(idx)].copy()


def _assignment_pass(source, centroids, norm_stats, k):
    """One full pass: inertia, per-cluster sums/counts, and the k frames
    farthest from their assigned centroids (reseed candidates)."""
    dim = centroids.shape[1]
    c_sq = (centroids * centroids).sum(axis=1)
    sums = np.zeros((k, dim))
    counts = np.zeros(k, dtype=np.int64)
    inertia = 0.0
    cand_d = np.empty(0)
    cand_x = np.empty((0, dim))
    for chunk in _frame_chunks(source, dim=dim):
        if norm_stats is not None:
            chunk = (chunk - norm_stats[0]) / norm_stats[1]
        gram = c_sq[None, :] - 2.0 * (chunk @ centroids.T)
        labels = gram.argmin(axis=1)  # first minimum: lowest index on ties
        # distances via the assigned centroid directly, not the expanded
        # form: avoids cancellation error for frames at their centroid
        diff = chunk - centroids[labels]
        dists = (diff * diff).sum(axis=1)
        inertia += float(dists.sum())
        np.add.at(sums, labels, chunk)
        counts += np.bincount(labels, minlength=k)
        top = min(k, chunk.shape[0])
        part = np.argpartition(dists, -top)[-top:]
        cand_d = np.concatenate([cand_d, dists[part]])
        cand_x = np.concatenate([cand_x, chunk[part]], axis=0)
        if cand_d.shape[0] > k:
            keep = np.argsort(-cand_d, kind="stable")[:k]
            cand_d = cand_d[keep]
            cand_x = cand_x[keep]
    order = np.argsort(-cand_d, kind="stable")
    return inertia, sums, counts, cand_x[order]


def _update(centroids, sums, counts, reseed_candidates):
    new = centroids.copy()
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    empties = np.flatnonzero(~nonempty)
    for rank, cluster in enumerate(empties):
        if rank < reseed_candidates.shape[0]:
            new[cluster] = reseed_candidates[rank]
    return new


def train_kmeans(
    data: FrameSource,
    k: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    init: str = "kmeanspp",
    minibatch_size: int | None = None,
    normalize: bool = False,
    feature_source: str = "",
) -> Codebook:
    """Train a codebook with Lloyd's algorithm.

    Stops when ``max_iters`` updates have been applied or the relative
    inertia decrease between passes drops below ``tol``. Deterministic
    given the seed and the order of the input stream.

    ``minibatch_size`` switches to incremental minibatch updates, an
    approximation for corpus-scale runs: it trades the exact-Lloyd's
    monotonicity guarantee for bounded per-iteration cost. ``normalize``
    standardizes features to zero mean / unit variance before clustering;
    the statistics are stored in codebook metadata and re-applied by
    :func:`assign`.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if max_iters < 1:
        raise ValidationError(f"max_iters must be >= 1, got {max_iters}")
    if tol < 0:
        raise ValidationError(f"tol must be non-negative, got {tol}")
    if init not in ("kmeanspp", "random"):
        raise ConfigError(f"unknown init {init!r}, expected 'kmeanspp' or 'random'")
    if not callable(data):
        data = list(data)
        source: FrameSource = data
    else:
        source = data

    sample_size = max(8 * k, 4096)
    total, sample, norm_stats = _survey(source, sample_size, seed, normalize)
    if total < k:
        raise CapacityError(f"only {total} frames for k={k} clusters")
    if norm_stats is not None:
        sample = (sample - norm_stats[0]) / norm_stats[1]

    init_rng = rng_for(seed, "kmeans-init")
    if init == "kmeanspp":
        centroids = _init_kmeanspp(sample, k, init_rng)
    else:
        centroids = _init_random(sample, k, init_rng)

    if minibatch_size is not None:
        return _train_minibatch(
            source, centroids, k, max_iters, seed, minibatch_size,
            norm_stats, normalize, feature_source,
        )

    history: list[float] = []
    prev: float | None = None
    iterations_run = 0
    while True:
        inertia, sums, counts, reseed = _assignment_pass(source, centroids, norm_stats, k)
        if prev is not None and inertia > prev * (1.0 + 1e-9) + 1e-12:
            raise NumericError(
                f"inertia increased between iterations: {prev} -> {inertia}"
            )
        history.append(inertia)
        if prev is not None and (prev - inertia) < tol * prev:
            break
        if inertia == 0.0:
            break
        if iterations_run >= max_iters:
            break
        centroids = _update(centroids, sums, counts, reseed)
        iterations_run += 1
        prev = inertia

    metadata = {"inertia_history": history, "init": init, "seed": seed, "tol": tol}
    if norm_stats is not None:
        metadata["feature_norm"] = {
            "mean": norm_stats[0].tolist(),
            "std": norm_stats[1].tolist(),
        }
    return Codebook(
        centroids=centroids.astype(np.float32),
        iterations_run=iterations_run,
        final_inertia=history[-1],
        feature_source=feature_source,
        metadata=metadata,
    )


def _train_minibatch(
    source, centroids, k, max_iters, seed, batch_size, norm_stats, normalize, feature_source
):
    if batch_size < 1:
        raise ValidationError(f"minibatch_size must be >= 1, got {batch_size}")
    frames = np.concatenate(
        [c for c in _frame_chunks(source)], axis=0
    )
    if norm_stats is not None:
        frames = (frames - norm_stats[0]) / norm_stats[1]
    rng = rng_for(seed, "kmeans-minibatch")
    weights = np.zeros(k)
    for _ in range(max_iters):
        take = min(batch_size, frames.shape[0])
        idx = rng.choice(frames.shape[0], size=take, replace=False)
        batch = frames[idx]
        c_sq = (centroids * centroids).sum(axis=1)
        labels = (c_sq[None, :] - 2.0 * batch @ centroids.T).argmin(axis=1)
        bsums = np.zeros_like(centroids)
        np.add.at(bsums, labels, batch)
        bcounts = np.bincount(labels, minlength=k).astype(np.float64)
        new_weights = weights + bcounts
        scale = np.divide(weights, new_weights, out=np.zeros(k), where=new_weights > 0)
        contrib = np.divide(
            bsums, new_weights[:, None], out=np.zeros_like(bsums), where=new_weights[:, None] > 0
        )
        touched = bcounts > 0
        centroids[touched] = centroids[touched] * scale[touched, None] + contrib[touched]
        weights = new_weights
    # honest final inertia: one full measuring pass against the result
    inertia, _, _, _ = _assignment_pass(source, centroids, norm_stats, k)
    metadata = {
        "inertia_history": [inertia],
        "init": "minibatch",
        "seed": seed,
        "minibatch_size": batch_size,
        "approximate": True,
    }
    if norm_stats is not None:
        metadata["feature_norm"] = {
            "mean": norm_stats[0].tolist(),
            "std": norm_stats[1].tolist(),
        }
    return Codebook(
        centroids=centroids.astype(np.float32),
        iterations_run=max_iters,
        final_inertia=inertia,
        feature_source=feature_source,
        metadata=metadata,
    )


def assign(codebook: Codebook, seq: FeatureSequence) -> DsuSequence:
    """Map each frame to its nearest centroid (squared Euclidean distance,
    ties to the lowest index). Returns a non-deduplicated id sequence."""
    if seq.dim != codebook.dim and seq.frame_count > 0:
        raise ValidationError(
            f"dimension mismatch: sequence {seq.utterance_id!r} has D={seq.dim}, "
            f"codebook has D={codebook.dim}"
        )
    centroids = codebook.centroids.astype(np.float64)
    norm = codebook.metadata.get("feature_norm")
    c_sq = (centroids * centroids).sum(axis=1)
    ids: list[int] = []
    for start in range(0, seq.frame_count, CHUNK_FRAMES):
        chunk = seq.frames[start : start + CHUNK_FRAMES].astype(np.float64)
        if norm is not None:
            chunk = (chunk - np.asarray(norm["mean"])) / np.asarray(norm["std"])
        labels = (c_sq[None, :] - 2.0 * chunk @ centroids.T).argmin(axis=1)
        ids.extend(int(x) for x in labels)
    return DsuSequence(
        utterance_id=seq.utterance_id,
        ids=ids,
        deduplicated=False,
        source_frame_count=seq.frame_count,
    )


def save_codebook(codebook: Codebook, path: str | Path) -> None:
    meta = {
        "iterations_run": codebook.iterations_run,
        "final_inertia": codebook.final_inertia,
        "feature_source": codebook.feature_source,
        **codebook.metadata,
    }
    blob = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CB_HEADER.pack(CODEBOOK_MAGIC, CODEBOOK_VERSION, codebook.k, codebook.dim))
        fh.write(np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_CB_HEADER.size)
        if len(head) < _CB_HEADER.size:
            raise TruncationError(
                f"{path}: file ends inside the codebook header",
                offset=len(head),
                expected=_CB_HEADER.size,
            )
        magic, version, k, dim = _CB_HEADER.unpack(head)
        if magic != CODEBOOK_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {CODEBOOK_MAGIC!r}")
        if version != CODEBOOK_VERSION:
            raise FormatError(f"{path}: unsupported codebook version {version}")
        body = fh.read(k * dim * 4)
        if len(body) < k * dim * 4:
            raise TruncationError(
                f"{path}: centroid payload truncated at byte {_CB_HEADER.size + len(body)}",
                offset=_CB_HEADER.size + len(body),
                expected=_CB_HEADER.size + k * dim * 4,
            )
        (meta_len,) = struct.unpack("<I", fh.read(4))
        blob = fh.read(meta_len)
        if len(blob) < meta_len:
            raise TruncationError(
                f"{path}: metadata truncated", offset=0, expected=meta_len
            )
    meta = json.loads(blob.decode("utf-8"))
    centroids = np.frombuffer(body, dtype="<f4").reshape(k, dim).copy()
    return Codebook(
        centroids=centroids,
        iterations_run=int(meta.pop("iterations_run", 0)),
        final_inertia=float(meta.pop("final_inertia", 0.0)),
        feature_source=str(meta.pop("feature_source", "")),
        metadata=meta,
    )
