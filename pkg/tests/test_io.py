import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sybilreg.errors import IndexOutOfRange, ValidationError
from sybilreg.io import (
    dumps,
    format_float,
    parse_spec,
    read_dataset_csv,
    read_referrals_csv,
    read_spec,
    read_transfers_csv,
    spec_to_obj,
    write_dataset_csv,
)
from sybilreg.model import Dataset, DisjointNetworkSpec


class TestFloats:
    def test_seventeen_digits(self):
        assert format_float(4 / 3) == "1.3333333333333333"
        assert format_float(0.1) == "0.10000000000000001"

    def test_integral_gets_decimal_point(self):
        assert format_float(2.0) == "2.0"
        assert format_float(-0.0) == "-0.0"

    def test_non_finite(self):
        assert format_float(float("nan")) is None
        assert dumps([float("inf"), 1.5]).strip() == "[null, 1.5]"

    @settings(max_examples=300)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_round_trip(self, x):
        assert float(format_float(x)) == x
        assert json.loads(dumps({"v": x}))["v"] == x


class TestDumps:
    def test_deterministic_layout(self):
        obj = {"a": 1, "b": [1.0, 2.5], "c": {"d": None, "e": "x"}, "f": [{"g": True}]}
        text = dumps(obj)
        assert json.loads(text) == obj
        assert '"b": [1.0, 2.5]' in text
        assert text == dumps(obj)

    def test_numpy_values(self):
        obj = {"arr": np.array([[1.0, 2.0], [3.0, 4.0]]), "i": np.int64(3), "b": np.bool_(True)}
        assert json.loads(dumps(obj)) == {"arr": [[1.0, 2.0], [3.0, 4.0]], "i": 3, "b": True}

    def test_compact(self):
        assert dumps({"a": [1, 2]}, indent=0) == '{"a":[1, 2]}\n'

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            dumps({"a": object()})


class TestDatasetCsv:
    def test_read_with_ids(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id,y,x1\na,1,0\nb,3,1\nc,5,2\n")
        ds = read_dataset_csv(p)
        assert ds.row_ids == ("a", "b", "c")
        assert ds.columns == ("const", "x1")
        np.testing.assert_array_equal(ds.X, [[1, 0], [1, 1], [1, 2]])

    def test_no_intercept(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,x1,x2\n1,0,1\n3,1,1\n5,2,1\n")
        ds = read_dataset_csv(p, intercept=False)
        assert ds.row_ids is None and ds.p == 2

    def test_round_trip(self, tmp_path, rng):
        X = np.column_stack([np.ones(20), rng.standard_normal((20, 2))])
        ds = Dataset(rng.standard_normal(20), X, tuple(f"r{i}" for i in range(20)), ("const", "x1", "x2"))
        p = tmp_path / "d.csv"
        write_dataset_csv(p, ds)
        back = read_dataset_csv(p)
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.y, ds.y)
        assert back.row_ids == ds.row_ids and back.columns == ds.columns

    @pytest.mark.parametrize(
        "text",
        ["", "x1,y\n1,2\n", "y,x1\n1\n", "y,x1\n1,abc\n", "id,y,x1\na,1,2\na,3,4\n"],
    )
    def test_invalid(self, tmp_path, text):
        p = tmp_path / "d.csv"
        p.write_text(text)
        with pytest.raises(ValidationError):
            read_dataset_csv(p)


class TestSpecJson:
    def test_round_trip_indices(self):
        s = DisjointNetworkSpec.from_groups(10, [((0, 1, 2), 0.25), ((5, 7), 0.9)])
        assert parse_spec(json.loads(dumps(spec_to_obj(s)))) == s

    def test_string_ids(self):
        ds = Dataset(np.zeros(3), np.ones((3, 1)), ("a", "b", "c"))
        s = parse_spec({"networks": [{"members": ["c", "a"], "pi": 0.5}]}, ds)
        assert s.networks[0].members == (0, 2)
        assert spec_to_obj(s, ds.row_ids)["networks"][0]["members"] == ["a", "c"]

    def test_unknown_id_named(self):
        ds = Dataset(np.zeros(3), np.ones((3, 1)), ("a", "b", "c"))
        with pytest.raises(IndexOutOfRange, match="'zz'"):
            parse_spec({"networks": [{"members": ["a", "zz"], "pi": 0.5}]}, ds)

    def test_mixed_members(self):
        ds = Dataset(np.zeros(3), np.ones((3, 1)), ("a", "b", "c"))
        with pytest.raises(ValidationError, match="mix"):
            parse_spec({"networks": [{"members": ["a", 1], "pi": 0.5}]}, ds)

    @pytest.mark.parametrize(
        "obj",
        [
            {},
            {"n": 3, "networks": [], "extra": 1},
            {"n": "3", "networks": []},
            {"n": 3, "networks": [{"members": [0, 1]}]},
            {"n": 3, "networks": [{"members": [0, 1], "pi": "half"}]},
            {"n": 3, "networks": [{"members": [0, 1], "pi": 1.5}]},
            {"n": 3, "networks": [{"members": [0, 5], "pi": 0.5}]},
            {"n": 3, "networks": [{"members": [0, 1], "pi": 0.5}, {"members": [1, 2], "pi": 0.5}]},
        ],
    )
    def test_invalid(self, obj):
        with pytest.raises(ValidationError):
            parse_spec(obj)

    def test_n_must_match_dataset(self):
        ds = Dataset(np.zeros(3), np.ones((3, 1)))
        with pytest.raises(ValidationError):
            parse_spec({"n": 4, "networks": []}, ds)

    def test_read_bad_json(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{not json")
        with pytest.raises(ValidationError):
            read_spec(p)


class TestGraphCsv:
    def test_referrals(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("referrer,referee\nW1,W2\nW2, W3\n")
        edges = read_referrals_csv(p)
        assert [(e.referrer, e.referee) for e in edges] == [("W1", "W2"), ("W2", "W3")]

    def test_transfers(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("from,to,count\nA,B,12\n")
        assert read_transfers_csv(p)[0].count == 12

    def test_bad_headers(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b\nW1,W2\n")
        with pytest.raises(ValidationError):
            read_referrals_csv(p)
        p.write_text("from,to,count\nA,B,many\n")
        with pytest.raises(ValidationError):
            read_transfers_csv(p)
