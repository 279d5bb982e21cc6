import json

import numpy as np
import pytest

from pecep import binio
from pecep.errors import InvalidInputError
from pecep.report import fmt_float, read_csv_records, report_emit


RECORDS = [
    {"trial": 0, "sigma2": 0.01, "predictor": "ols", "pecep": -6.123456789123, "theoretical_bound": None},
    {"trial": 1, "sigma2": 1.0, "predictor": "oracle", "pecep": 11.35151, "extra": 3},
]


class TestFormatting:
    @pytest.mark.parametrize(
        "value,text",
        [(1.0, "1"), (0.1234567891234, "0.123456789"), (1e-12, "1e-12"), (float("nan"), "nan"), (7, "7"), (None, "")],
    )
    def test_fmt(self, value, text):
        assert fmt_float(value) == text


class TestEmit:
    def test_empty_creates_nothing(self, tmp_path):
        path = tmp_path / "x.csv"
        with pytest.raises(InvalidInputError):
            report_emit([], "csv", path)
        assert not path.exists()

    def test_csv_round_trip(self, tmp_path):
        path = report_emit(RECORDS, "csv", tmp_path / "r.csv")
        back = read_csv_records(path)
        assert back[0]["pecep"] == float(fmt_float(RECORDS[0]["pecep"]))
        assert back[0]["theoretical_bound"] is None
        assert back[1]["extra"] == 3 and back[0]["extra"] is None
        assert path.read_text().splitlines()[0] == "trial,sigma2,predictor,pecep,theoretical_bound,extra"

    def test_json_mirror_and_config_echo(self, tmp_path):
        path = report_emit(RECORDS, "json", tmp_path / "r.json", config={"master_seed": 12345678901}, seeds={"master_seed": 12345678901})
        doc = json.loads(path.read_text())
        assert doc["config"]["master_seed"] == 12345678901
        assert doc["unit"] == "nats"
        assert doc["columns"] == ["trial", "sigma2", "predictor", "pecep", "theoretical_bound", "extra"]
        csv_back = read_csv_records(report_emit(RECORDS, "csv", tmp_path / "r.csv"))
        for a, b in zip(doc["records"], csv_back):
            assert a == b

    def test_byte_identical(self, tmp_path):
        a = report_emit(RECORDS, "json", tmp_path / "a.json", config={"x": 1})
        b = report_emit(RECORDS, "json", tmp_path / "b.json", config={"x": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_bad_format(self, tmp_path):
        with pytest.raises(InvalidInputError):
            report_emit(RECORDS, "xml", tmp_path / "r.xml")


class TestBinio:
    def test_round_trip(self, tmp_path):
        m = np.random.default_rng(0).standard_normal((7, 3))
        binio.write_matrix(tmp_path / "m.bin", m, {"tag": "x"})
        back, meta = binio.read_matrix(tmp_path / "m.bin")
        np.testing.assert_array_equal(back, m)
        assert meta["rows"] == 7 and meta["cols"] == 3 and meta["tag"] == "x"
        assert (tmp_path / "m.bin").stat().st_size == 7 * 3 * 8

    def test_size_mismatch(self, tmp_path):
        binio.write_matrix(tmp_path / "m.bin", np.zeros((2, 2)))
        (tmp_path / "m.bin").write_bytes(b"\0" * 24)
        with pytest.raises(InvalidInputError):
            binio.read_matrix(tmp_path / "m.bin")

    def test_rejects_vector(self, tmp_path):
        with pytest.raises(InvalidInputError):
            binio.write_matrix(tmp_path / "v.bin", np.zeros(3))
