"""Unit sequences: deduplication, token rendering, parsing, and corpus I/O."""

import json

import pytest
from hypothesis import given, strategies as st

from dsukit import (
    DsuSequence,
    FormatError,
    ParseError,
    ValidationError,
    count_tokens,
    count_units,
    deduplicate,
    estimate_hours,
    parse,
    read_unit_corpus,
    render,
    strip_unit_tokens,
    unit_token,
    unit_vocabulary,
    write_unit_corpus,
)

ids_lists = st.lists(st.integers(min_value=0, max_value=499), max_size=60)


def test_dedup_hand_case():
    seq = DsuSequence("u", [1, 1, 2, 2, 2, 3, 1])
    out = deduplicate(seq)
    assert out.ids == [1, 2, 3, 1]
    assert out.deduplicated
    assert out.source_frame_count == 7


@given(ids_lists)
def test_dedup_idempotent(ids):
    once = deduplicate(DsuSequence("u", ids))
    twice = deduplicate(once)
    assert once.ids == twice.ids
    assert twice.source_frame_count == once.source_frame_count


@given(ids_lists)
def test_dedup_properties(ids):
    out = deduplicate(DsuSequence("u", ids))
    assert all(a != b for a, b in zip(out.ids, out.ids[1:]))
    assert len(out.ids) <= len(ids)
    if ids:
        assert out.ids[0] == ids[0]
        assert out.ids[-1] == ids[-1]
    else:
        assert out.ids == []


def test_sequence_validation():
    with pytest.raises(ValidationError):
        DsuSequence("u", [0, -1])
    with pytest.raises(ValidationError):
        DsuSequence("u", [True, 2])  # bool is not a unit id
    with pytest.raises(ValidationError):
        DsuSequence("u", [1, 1], deduplicated=True)  # adjacent repeat


def test_render_requires_dedup():
    with pytest.raises(ValidationError, match="deduplicate"):
        render(DsuSequence("u", [1, 2]))


def test_render_and_token_form():
    seq = DsuSequence("u", [0, 7, 0], deduplicated=True)
    assert render(seq) == "<extra_id_0><extra_id_7><extra_id_0>"
    assert render(seq, base=100) == "<extra_id_100><extra_id_107><extra_id_100>"
    assert unit_token(3) == "<extra_id_3>"
    assert unit_vocabulary(3, base=10) == [
        "<extra_id_10>", "<extra_id_11>", "<extra_id_12>"
    ]


@given(ids_lists, st.integers(min_value=0, max_value=1000))
def test_render_parse_round_trip(ids, base):
    seq = deduplicate(DsuSequence("utt", ids))
    text = render(seq, base=base)
    back = parse(text, base=base, utterance_id="utt")
    assert back.ids == seq.ids


def test_parse_rejects_separators():
    with pytest.raises(ParseError) as err:
        parse("<extra_id_1> <extra_id_2>")
    assert err.value.offset == 12


def test_parse_rejects_leading_zeros():
    with pytest.raises(ParseError):
        parse("<extra_id_01>")


def test_parse_rejects_below_base():
    with pytest.raises(ParseError):
        parse("<extra_id_5>", base=10)


def test_parse_enforces_k_bound():
    assert parse("<extra_id_4>", k=5).ids == [4]
    with pytest.raises(ParseError) as err:
        parse("<extra_id_0><extra_id_5>", k=5)
    assert "k=5" in str(err.value)
    assert err.value.offset == 12


def test_count_and_strip():
    text = "Speech:<extra_id_1><extra_id_2>\nEnglish: hi"
    assert count_tokens(text) == 2
    assert strip_unit_tokens(text) == "Speech:\nEnglish: hi"
    assert count_tokens("no units") == 0


def test_count_units():
    seqs = [DsuSequence("a", [1, 2]), DsuSequence("b", [3])]
    assert count_units(seqs) == 3


def test_estimate_hours():
    # one hour of audio at the fixed default unit rate
    assert estimate_hours(35 * 3600) == pytest.approx(1.0)
    assert estimate_hours(0) == 0.0
    assert estimate_hours(7200, units_per_sec=2.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        estimate_hours(-1)
    with pytest.raises(ValidationError):
        estimate_hours(10, units_per_sec=0.0)


def test_unit_corpus_round_trip(tmp_path):
    seqs = [
        deduplicate(DsuSequence("a", [1, 1, 2])),
        DsuSequence("b", [5, 6, 5]),
    ]
    path = tmp_path / "units.jsonl"
    assert write_unit_corpus(path, seqs) == 2
    back = read_unit_corpus(path)
    assert [s.utterance_id for s in back] == ["a", "b"]
    assert back[0].ids == [1, 2]
    assert back[0].deduplicated is True
    assert back[0].source_frame_count == 3
    assert back[1].ids == [5, 6, 5]
    assert back[1].deduplicated is False


def test_unit_corpus_on_disk_schema(tmp_path):
    path = tmp_path / "units.jsonl"
    write_unit_corpus(path, [DsuSequence("x", [4, 2])])
    row = json.loads(path.read_text().splitlines()[0])
    assert set(row) == {"id", "ids", "deduplicated", "source_frame_count"}
    assert row["ids"] == [4, 2]


def test_unit_corpus_rejects_non_list_ids(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x", "ids": "<extra_id_1>", "deduplicated": false, "source_frame_count": 1}\n')
    with pytest.raises(FormatError):
        read_unit_corpus(path)
