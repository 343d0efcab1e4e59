"""
Tests for CSV/JSON artifact writers.
"""

import json

import numpy as np

from src.artifacts import CONVENTION, format_value, read_csv, read_csv_comments, write_csv, write_json


class TestFormatValue:
    """Tests for cell formatting."""

    def test_float_round_trips(self):
        value = 0.1 + 0.2

        assert float(format_value(value)) == value
        assert format_value(np.float64(1.5)) == "1.5"

    def test_missing_is_nan(self):
        assert format_value(None) == "nan"

    def test_integers_and_strings(self):
        assert format_value(7) == "7"
        assert format_value("done") == "done"


class TestWriteCsv:
    """Tests for write_csv."""

    def test_comments_and_line_endings(self, tmp_path):
        path = write_csv(tmp_path / "nested" / "table.csv", ["a", "b"], [[1.0, 2.0], [3.0, None]],
                         digest="abc", extra={"symbol": "free"})

        text = path.read_text()
        assert text.splitlines()[:3] == ["# config_digest=abc", f"# convention={CONVENTION}", "# symbol=free"]
        assert "\r" not in text
        assert read_csv(path) == [["a", "b"], ["1", "2"], ["3", "nan"]]

    def test_without_digest(self, tmp_path):
        path = write_csv(tmp_path / "table.csv", ["a"], [])

        assert path.read_text().startswith("# config_digest=none\n")

    def test_header_comments_read_back(self, tmp_path):
        path = write_csv(tmp_path / "table.csv", ["a"], [[1.0]], digest="abc", extra={"N": 32, "L": repr(4.0)})

        assert read_csv_comments(path) == {"config_digest": "abc", "convention": CONVENTION, "N": "32", "L": "4.0"}


class TestWriteJson:
    """Tests for write_json."""

    def test_sorted_keys_and_tags(self, tmp_path):
        path = write_json(tmp_path / "report.json", {"zeta": np.arange(3), "alpha": 1}, digest="d")

        text = path.read_text()
        payload = json.loads(text)
        assert payload["zeta"] == [0, 1, 2]
        assert payload["config_digest"] == "d"
        assert payload["convention"] == CONVENTION
        assert text.index('"alpha"') < text.index('"zeta"')
