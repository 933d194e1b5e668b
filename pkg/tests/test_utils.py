"""Tests for trotterbridge.utils module."""

import json

import numpy as np
import pytest

from trotterbridge.utils import (
    canonical_json,
    format_float,
    parse_int_list,
    render_csv,
    write_text,
)


class TestParseIntList:
    """Tests for parse_int_list function."""

    def test_single(self):
        assert parse_int_list("8") == [8]

    def test_several(self):
        assert parse_int_list("4,8,16") == [4, 8, 16]

    def test_whitespace_stripped(self):
        assert parse_int_list(" 4, 8 ,16 ") == [4, 8, 16]

    def test_order_kept(self):
        assert parse_int_list("16,4") == [16, 4]

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            parse_int_list(" , ")

    def test_not_an_integer_raises(self):
        with pytest.raises(ValueError):
            parse_int_list("4,eight")


class TestFormatFloat:
    """Tests for format_float function."""

    def test_seventeen_digits(self):
        assert format_float(0.1) == "0.10000000000000001"

    def test_integers_stay_short(self):
        assert format_float(2.0) == "2"

    def test_negative_zero(self):
        assert format_float(-0.0) == "0"

    def test_round_trip(self):
        value = 1 / 3
        assert float(format_float(value)) == value

    def test_non_finite_raises(self):
        with pytest.raises(ValueError):
            format_float(float("nan"))


class TestCanonicalJson:
    """Tests for canonical_json function."""

    def test_parses_back(self):
        document = {"b": 1, "a": [0.25, True, None], "c": "x"}
        assert json.loads(canonical_json(document)) == document

    def test_key_order_kept(self):
        text = canonical_json({"b": 1, "a": 2})
        assert text.index('"b"') < text.index('"a"')

    def test_complex_numbers(self):
        assert json.loads(canonical_json({"K": 0.5 - 0.25j})) == {"K": {"re": 0.5, "im": -0.25}}

    def test_numpy_scalars(self):
        assert json.loads(canonical_json([np.float64(0.5), np.int64(3)])) == [0.5, 3]

    def test_trailing_newline(self):
        assert canonical_json({}) == "{}\n"

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            canonical_json({"x": object()})


class TestRenderCsv:
    """Tests for render_csv function."""

    def test_header_and_rows(self):
        text = render_csv([{"n": 8, "value": 0.5}], ["n", "value"])
        assert text == "n,value\n8,0.5\n"

    def test_missing_values_are_empty(self):
        text = render_csv([{"n": 8, "err": None}], ["n", "err", "extra"])
        assert text.splitlines()[1] == "8,,"

    def test_booleans(self):
        assert render_csv([{"ok": True}], ["ok"]).splitlines()[1] == "True"


class TestWriteText:
    """Tests for write_text function."""

    def test_creates_parents(self, tmp_path):
        path = write_text(tmp_path / "a" / "b" / "out.csv", "x\n")
        assert path.read_text(encoding="utf-8") == "x\n"
