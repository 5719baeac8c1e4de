import pytest

from errforge.questions import (
    PoolError,
    Question,
    SubjectMap,
    ingest,
    parse_gold,
    serialize,
    slice_pool,
)

from conftest import make_pool


class TestParseGold:
    def test_integer(self):
        assert parse_gold("integer", 11760) == 11760
        assert parse_gold("integer", "4200") == 4200

    def test_float(self):
        assert parse_gold("float", 1.42) == 1.42
        assert parse_gold("float", 1) == 1.0
        assert isinstance(parse_gold("float", 1), float)

    def test_bool(self):
        assert parse_gold("bool", False) is False
        assert parse_gold("bool", "true") is True

    def test_list_of_numbers(self):
        assert parse_gold("list", [0, 5]) == [0, 5]
        assert parse_gold("list", "[0.333, 0.25]") == [0.333, 0.25]

    def test_bool_is_not_an_integer(self):
        with pytest.raises(ValueError):
            parse_gold("integer", True)

    def test_bool_is_not_a_float(self):
        with pytest.raises(ValueError):
            parse_gold("float", True)

    def test_integer_is_not_a_bool(self):
        with pytest.raises(ValueError):
            parse_gold("bool", 1)

    def test_list_rejects_bools_and_strings(self):
        with pytest.raises(ValueError):
            parse_gold("list", [1, True])
        with pytest.raises(ValueError):
            parse_gold("list", ["a"])

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            parse_gold("matrix", [[1]])


class TestIngest:
    def test_bundled_pool_loads(self):
        from importlib.resources import files

        path = files("errforge.data") / "tier1_pool.jsonl"
        pool = ingest(str(path))
        assert len(pool) == 20
        assert pool[0].id == "q1"
        assert pool[0].gold_answer == 11760
        by_id = {q.id: q for q in pool}
        assert by_id["q12"].gold_answer is False
        assert by_id["q5"].gold_answer == [0, 5]
        assert by_id["q19"].gold_answer == pytest.approx(1.3733)

    def test_round_trip(self, tmp_path):
        pool = make_pool(7)
        path = tmp_path / "pool.jsonl"
        serialize(pool, path)
        assert ingest(path) == pool

    def test_bad_json_names_the_line(self, tmp_path):
        path = tmp_path / "pool.jsonl"
        path.write_text(
            '{"id": "a", "text": "t", "answer_type": "integer", "gold_answer": 1}\n'
            "{oops}\n"
        )
        with pytest.raises(PoolError, match=r":2"):
            ingest(path)

    def test_type_mismatch_names_the_line(self, tmp_path):
        path = tmp_path / "pool.jsonl"
        path.write_text(
            '{"id": "a", "text": "t", "answer_type": "integer", "gold_answer": "abc"}\n'
        )
        with pytest.raises(PoolError, match=r":1"):
            ingest(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "pool.jsonl"
        line = '{"id": "a", "text": "t", "answer_type": "integer", "gold_answer": 1}\n'
        path.write_text(line + line)
        with pytest.raises(PoolError, match="duplicate"):
            ingest(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "pool.jsonl"
        path.write_text('{"id": "a", "text": "t", "answer_type": "integer"}\n')
        with pytest.raises(PoolError, match="gold_answer"):
            ingest(path)


class TestSlicePool:
    def test_full_range(self):
        pool = make_pool(20)
        assert slice_pool(pool, 0, 20) == pool

    def test_sub_range_preserves_order(self):
        pool = make_pool(20)
        sliced = slice_pool(pool, 5, 10)
        assert [q.id for q in sliced] == [q.id for q in pool[5:10]]

    def test_out_of_bounds_rejected(self):
        pool = make_pool(20)
        with pytest.raises(PoolError):
            slice_pool(pool, 20, 200)
        with pytest.raises(PoolError):
            slice_pool(pool, -1, 5)
        with pytest.raises(PoolError):
            slice_pool(pool, 10, 5)

    def test_empty_range_allowed(self):
        assert slice_pool(make_pool(20), 5, 5) == []


class TestSubjectMap:
    def test_bundled_map_covers_tier1(self):
        from importlib.resources import files

        smap = SubjectMap.load(str(files("errforge.data") / "tier1_subjects.json"))
        assert smap.bucket("q1") == "combinatorics/graph"
        assert smap.bucket("q2") == "analysis"
        counts = {}
        for i in range(1, 21):
            b = smap.bucket(f"q{i}")
            counts[b] = counts.get(b, 0) + 1
        assert counts == {
            "combinatorics/graph": 6,
            "analysis": 7,
            "linear algebra": 3,
            "physics/probability": 4,
        }

    def test_missing_question_is_an_error(self):
        smap = SubjectMap({"q1": "algebra"})
        with pytest.raises(KeyError):
            smap.bucket("q99")

    def test_null_means_unbucketed(self):
        smap = SubjectMap({"q1": None})
        assert smap.bucket("q1") is None
        assert smap.buckets() == []


def test_gold_literal_is_json():
    q = Question(id="x", text="t", answer_type="list", gold_answer=[4, 1, 2, 0])
    assert q.gold_literal() == "[4, 1, 2, 0]"
    q2 = Question(id="y", text="t", answer_type="bool", gold_answer=False)
    assert q2.gold_literal() == "false"
