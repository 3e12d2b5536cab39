"""Codebook training, assignment, and serialization."""

import itertools

import numpy as np
import pytest

from dsukit import (
    CapacityError,
    Codebook,
    ConfigError,
    DataError,
    FeatureSequence,
    FormatError,
    TruncationError,
    ValidationError,
    assign,
    load_codebook,
    save_codebook,
    train_kmeans,
)


def _seqs_from(matrix, per_utt=None):
    matrix = np.asarray(matrix, dtype=np.float32)
    if per_utt is None:
        return [FeatureSequence("all", matrix)]
    out = []
    for i in range(0, matrix.shape[0], per_utt):
        out.append(FeatureSequence(f"u{i}", matrix[i : i + per_utt]))
    return out


def _brute_force_two_means(points):
    """Independent oracle: exact minimum inertia over every 2-partition."""
    points = np.asarray(points, dtype=np.float64)
    best = np.inf
    n = points.shape[0]
    for mask in range(1, 2 ** n - 1):
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        inertia = 0.0
        for part in (points[sel], points[~sel]):
            centroid = part.mean(axis=0)
            inertia += float(((part - centroid) ** 2).sum())
        best = min(best, inertia)
    return best


UNIT_SQUARE = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]


def test_unit_square_brute_force_oracle():
    # frozen oracle value: the best 2-split pairs opposite edges, each
    # point 0.25 from its centroid
    assert _brute_force_two_means(UNIT_SQUARE) == pytest.approx(1.0, abs=1e-12)


def test_unit_square_reaches_the_optimum():
    cb = train_kmeans(_seqs_from(UNIT_SQUARE), k=2, seed=0, tol=1e-12)
    assert cb.final_inertia == pytest.approx(1.0, abs=1e-9)


def test_single_cluster_is_the_mean():
    rng = np.random.default_rng(4)
    data = rng.standard_normal((500, 6)).astype(np.float32)
    cb = train_kmeans(_seqs_from(data, per_utt=37), k=1, seed=0)
    mean = data.astype(np.float64).mean(axis=0)
    assert np.abs(cb.centroids[0] - mean).max() <= 1e-6 * max(1.0, np.abs(mean).max())


def test_inertia_history_non_increasing():
    rng = np.random.default_rng(11)
    data = rng.standard_normal((400, 4)).astype(np.float32)
    cb = train_kmeans(_seqs_from(data, per_utt=64), k=7, seed=2)
    history = cb.metadata["inertia_history"]
    assert len(history) >= 1
    assert all(b <= a * (1 + 1e-9) for a, b in zip(history, history[1:]))
    assert cb.final_inertia == history[-1]


def test_training_is_deterministic():
    rng = np.random.default_rng(8)
    data = rng.standard_normal((300, 5)).astype(np.float32)
    a = train_kmeans(_seqs_from(data, per_utt=50), k=4, seed=9)
    b = train_kmeans(_seqs_from(data, per_utt=50), k=4, seed=9)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.final_inertia == b.final_inertia


def test_utterance_boundaries_do_not_change_the_result():
    # frames stream through fixed-size chunks, so how they are cut into
    # utterances must not matter
    rng = np.random.default_rng(21)
    data = rng.standard_normal((257, 3)).astype(np.float32)
    one = train_kmeans(_seqs_from(data), k=5, seed=1)
    many = train_kmeans(_seqs_from(data, per_utt=10), k=5, seed=1)
    assert np.array_equal(one.centroids, many.centroids)


def test_callable_source_is_supported():
    rng = np.random.default_rng(2)
    data = rng.standard_normal((120, 3)).astype(np.float32)

    def factory():
        yield from _seqs_from(data, per_utt=30)

    cb1 = train_kmeans(factory, k=3, seed=0)
    cb2 = train_kmeans(_seqs_from(data, per_utt=30), k=3, seed=0)
    assert np.array_equal(cb1.centroids, cb2.centroids)


def test_assign_matches_brute_force():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((200, 4)).astype(np.float32)
    cb = train_kmeans(_seqs_from(data), k=6, seed=3)
    seq = FeatureSequence("probe", rng.standard_normal((50, 4)).astype(np.float32))
    got = assign(cb, seq).ids
    cents = cb.centroids.astype(np.float64)
    frames = seq.frames.astype(np.float64)
    want = [int(np.argmin(((f - cents) ** 2).sum(axis=1))) for f in frames]
    assert got == want


def test_assign_breaks_ties_to_lowest_index():
    cents = np.array([[0.0, 1.0], [0.0, -1.0], [0.0, 1.0]], dtype=np.float32)
    cb = Codebook(centroids=cents)
    seq = FeatureSequence("t", np.array([[0.0, 0.0], [0.0, 0.5]], dtype=np.float32))
    assert assign(cb, seq).ids == [0, 0]


def test_assign_output_is_not_deduplicated():
    cb = Codebook(centroids=np.array([[0.0], [10.0]], dtype=np.float32))
    seq = FeatureSequence("t", np.array([[0.1], [0.2], [9.9]], dtype=np.float32))
    out = assign(cb, seq)
    assert out.ids == [0, 0, 1]
    assert not out.deduplicated
    assert out.source_frame_count == 3


def test_assign_dimension_mismatch():
    cb = Codebook(centroids=np.zeros((2, 3), dtype=np.float32))
    with pytest.raises(ValidationError, match="dimension"):
        assign(cb, FeatureSequence("t", np.zeros((1, 2), dtype=np.float32)))


def test_more_clusters_than_frames_rejected():
    with pytest.raises(CapacityError):
        train_kmeans(_seqs_from(np.zeros((3, 2))), k=4)


def test_empty_stream_rejected():
    with pytest.raises(DataError):
        train_kmeans([], k=1)


def test_unknown_init_rejected():
    with pytest.raises(ConfigError):
        train_kmeans(_seqs_from(np.zeros((4, 2))), k=2, init="fancy")


def test_non_finite_frames_rejected():
    bad = np.array([[0.0, np.inf]], dtype=np.float32)
    with pytest.raises(ValidationError):
        train_kmeans([FeatureSequence("bad", bad)], k=1)


def test_mixed_dimensions_rejected():
    seqs = [
        FeatureSequence("a", np.zeros((4, 2), dtype=np.float32)),
        FeatureSequence("b", np.zeros((4, 3), dtype=np.float32)),
    ]
    with pytest.raises(ValidationError):
        train_kmeans(seqs, k=2)


def test_parameter_validation():
    data = _seqs_from(np.zeros((10, 2)))
    with pytest.raises(ValidationError):
        train_kmeans(data, k=0)
    with pytest.raises(ValidationError):
        train_kmeans(data, k=2, max_iters=0)
    with pytest.raises(ValidationError):
        train_kmeans(data, k=2, tol=-1e-3)


def test_random_init_also_converges():
    rng = np.random.default_rng(14)
    data = rng.standard_normal((200, 3)).astype(np.float32)
    cb = train_kmeans(_seqs_from(data), k=4, seed=0, init="random")
    assert cb.metadata["init"] == "random"
    history = cb.metadata["inertia_history"]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(history, history[1:]))


def test_well_separated_clusters_recovered():
    rng = np.random.default_rng(17)
    centers = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    data = np.concatenate([
        center + 0.05 * rng.standard_normal((60, 2)) for center in centers
    ]).astype(np.float32)
    cb = train_kmeans(_seqs_from(data, per_utt=45), k=3, seed=0)
    found = sorted(np.round(cb.centroids / 10).astype(int).tolist())
    assert found == [[0, 0], [0, 2], [2, 0]]


def test_minibatch_is_flagged_and_measured():
    rng = np.random.default_rng(23)
    data = rng.standard_normal((600, 4)).astype(np.float32)
    cb = train_kmeans(_seqs_from(data, per_utt=100), k=5, seed=0, minibatch_size=64)
    assert cb.metadata["approximate"] is True
    assert cb.metadata["minibatch_size"] == 64
    assert cb.final_inertia > 0.0  # honest full-pass measurement
    again = train_kmeans(_seqs_from(data, per_utt=100), k=5, seed=0, minibatch_size=64)
    assert np.array_equal(cb.centroids, again.centroids)


def test_normalize_stats_stored_and_assign_agrees():
    rng = np.random.default_rng(29)
    # wildly different scales per dimension
    data = (rng.standard_normal((300, 2)) * np.array([100.0, 0.01])).astype(np.float32)
    cb = train_kmeans(_seqs_from(data, per_utt=60), k=4, seed=0, normalize=True)
    stats = cb.metadata["feature_norm"]
    assert len(stats["mean"]) == 2 and len(stats["std"]) == 2
    # assigning training data must agree with manual standardization
    seq = FeatureSequence("probe", data[:40])
    got = assign(cb, seq).ids
    mean = np.asarray(stats["mean"])
    std = np.asarray(stats["std"])
    normed = (data[:40].astype(np.float64) - mean) / std
    cents = cb.centroids.astype(np.float64)
    want = [int(np.argmin(((f - cents) ** 2).sum(axis=1))) for f in normed]
    assert got == want


def test_codebook_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    data = rng.standard_normal((100, 3)).astype(np.float32)
    cb = train_kmeans(_seqs_from(data), k=4, seed=0, feature_source="probe-layer")
    path = tmp_path / "cb.spkm"
    save_codebook(cb, path)
    back = load_codebook(path)
    assert np.array_equal(back.centroids, cb.centroids)
    assert back.final_inertia == cb.final_inertia
    assert back.iterations_run == cb.iterations_run
    assert back.feature_source == "probe-layer"
    assert back.metadata["inertia_history"] == cb.metadata["inertia_history"]


def test_codebook_truncation_detected(tmp_path):
    cb = Codebook(centroids=np.ones((2, 2), dtype=np.float32))
    path = tmp_path / "cb.spkm"
    save_codebook(cb, path)
    blob = path.read_bytes()
    for cut in (3, 10, len(blob) - 2):
        path.write_bytes(blob[:cut])
        with pytest.raises(TruncationError):
            load_codebook(path)


def test_codebook_bad_magic(tmp_path):
    path = tmp_path / "cb.spkm"
    cb = Codebook(centroids=np.ones((1, 1), dtype=np.float32))
    save_codebook(cb, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"WHAT"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="magic"):
        load_codebook(path)
