import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ltpdc.distributions import ConfusionMatrix, PredictionRecord
from ltpdc.errors import ParseError
from ltpdc.io import (
    atomic_write,
    dumps_report,
    fixture_path,
    format_confusion_csv,
    format_counts,
    format_float,
    format_predictions,
    loads_report,
    read_confusion_csv,
    read_counts,
    read_labels,
    read_predictions,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestPredictions:
    def test_label_log(self, tmp_path):
        p = write(tmp_path, "p.csv", "sample_id,true_label,pred_label\na,0,1\nb,1,1\n")
        recs, has_logits = read_predictions(p)
        assert not has_logits
        assert recs == [PredictionRecord("a", 0, 1), PredictionRecord("b", 1, 1)]

    def test_logit_log(self, tmp_path):
        p = write(tmp_path, "p.csv", "sample_id,true_label,logit_0,logit_1,logit_2\nx,2,0.1,-3,2.5\n")
        recs, has_logits = read_predictions(p)
        assert has_logits and recs[0].predicted_label() == 2
        np.testing.assert_array_equal(recs[0].predicted, [0.1, -3.0, 2.5])

    def test_round_trip_logits(self, tmp_path, rng):
        recs = [PredictionRecord(str(i), int(rng.integers(0, 3)), rng.normal(size=3)) for i in range(20)]
        p = write(tmp_path, "p.csv", format_predictions(recs, num_logits=3))
        back, _ = read_predictions(p)
        for a, b in zip(recs, back):
            assert a.true_label == b.true_label
            np.testing.assert_array_equal(a.predicted, b.predicted)

    @pytest.mark.parametrize("text,line", [
        ("sample_id,label,pred\n", 1),
        ("sample_id,true_label,pred_label\na,0,1\nb,x,1\n", 3),
        ("sample_id,true_label,pred_label\na,0\n", 2),
        ("sample_id,true_label,logit_0,logit_1\na,0,1.0,nan\n", 2),
        ("sample_id,true_label,logit_0,logit_2\n", 1),
    ])
    def test_parse_errors_carry_line(self, tmp_path, text, line):
        p = write(tmp_path, "p.csv", text)
        with pytest.raises(ParseError) as exc:
            read_predictions(p)
        assert exc.value.line == line
        assert f"line {line}" in str(exc.value)

    def test_empty(self, tmp_path):
        with pytest.raises(ParseError):
            read_predictions(write(tmp_path, "p.csv", ""))


class TestCounts:
    def test_round_trip(self, tmp_path):
        p = write(tmp_path, "c.csv", format_counts([500, 50, 5]))
        assert read_counts(p).tolist() == [500, 50, 5]

    @pytest.mark.parametrize("text", ["id,n\n0,1\n1,2\n", "class_id,count\n0,5\n2,3\n",
                                      "class_id,count\n0,5\n1,-3\n", "class_id,count\n0,5\n"])
    def test_bad(self, tmp_path, text):
        with pytest.raises(ParseError):
            read_counts(write(tmp_path, "c.csv", text))


class TestLabels:
    def test_plain(self, tmp_path):
        assert read_labels(write(tmp_path, "l.txt", "0\n2\n1\n")).tolist() == [0, 2, 1]

    def test_headed(self, tmp_path):
        assert read_labels(write(tmp_path, "l.txt", "label\n3\n1\n")).tolist() == [3, 1]
        assert read_labels(write(tmp_path, "l.csv", "index,label\n0,3\n1,1\n")).tolist() == [3, 1]

    def test_bad(self, tmp_path):
        with pytest.raises(ParseError, match="line 3"):
            read_labels(write(tmp_path, "l.txt", "0\n1\nfoo\n"))


class TestConfusionCsv:
    def test_round_trip(self, tmp_path, rng):
        cm = ConfusionMatrix(rng.integers(0, 50, (7, 7)))
        p = write(tmp_path, "cm.csv", format_confusion_csv(cm))
        assert read_confusion_csv(p) == cm

    def test_shipped_fixtures_parse(self):
        a = read_confusion_csv(fixture_path("acc_trap_head.csv"))
        b = read_confusion_csv(fixture_path("acc_trap_spread.csv"))
        assert a.num_classes == b.num_classes == 10
        assert read_counts(fixture_path("acc_trap_train_counts.csv")).size == 10


class TestReportSerialization:
    def test_seventeen_digits(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(1.0) == "1.0"
        assert format_float(2e-300 / 3) == "6.6666666666666668e-301"

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_round_trip(self, x):
        assert float(format_float(x)) == x

    def test_document_round_trip(self):
        doc = {"a": 0.1, "b": [1, 2.5, None], "c": {"d": "é", "e": True, "f": 1 / 3},
               "g": [{"h": 2.0}], "nan": float("nan"), "empty": [], "obj": {}}
        text = dumps_report(doc)
        back = loads_report(text)
        assert back["a"] == 0.1 and back["c"]["f"] == 1 / 3 and back["nan"] is None
        assert dumps_report(back) == text
        assert json.loads(text) == back

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        target = tmp_path / "sub" / "r.json"
        atomic_write(target, "x")
        atomic_write(target, "y")
        assert target.read_text() == "y"
        assert [p.name for p in target.parent.iterdir()] == ["r.json"]
