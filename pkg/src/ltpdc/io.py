"""File formats: prediction logs, count files, splits, confusion CSVs and report documents.

Report documents are JSON with every float written to 17 significant
digits; see docs/report_format.md for the key layout.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .distributions import ConfusionMatrix, PredictionRecord
from .errors import ParseError

PRED_HEADER = ["sample_id", "true_label", "pred_label"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, text: str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                yield lineno, [c.strip() for c in row]
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), path=path) from exc


def _int(value, path, lineno, what):
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{what} {value!r} is not an integer", line=lineno, path=path) from None


def _float(value, path, lineno, what):
    try:
        v = float(value)
    except ValueError:
        raise ParseError(f"{what} {value!r} is not a number", line=lineno, path=path) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} {value!r} is not finite", line=lineno, path=path)
    return v


def read_predictions(path) -> Tuple[List[PredictionRecord], bool]:
    """Parse a prediction log; returns (records, has_logits).

    Header is either ``sample_id,true_label,pred_label`` or
    ``sample_id,true_label,logit_0,...,logit_{C-1}``.
    """
    rows = _rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError("empty prediction file", path=path) from None
    if header[:2] != PRED_HEADER[:2] or len(header) < 3:
        raise ParseError(f"unexpected header {header!r}", line=lineno, path=path)
    if header == PRED_HEADER:
        has_logits = False
    elif header[2:] == [f"logit_{i}" for i in range(len(header) - 2)]:
        has_logits = True
    else:
        raise ParseError(f"unexpected header {header!r}", line=lineno, path=path)
    records = []
    for lineno, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno, path=path)
        true = _int(row[1], path, lineno, "true_label")
        if has_logits:
            pred = np.array([_float(v, path, lineno, "logit") for v in row[2:]])
        else:
            pred = _int(row[2], path, lineno, "pred_label")
        records.append(PredictionRecord(row[0], true, pred))
    return records, has_logits


def format_predictions(records, num_logits=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if num_logits:
        w.writerow(PRED_HEADER[:2] + [f"logit_{i}" for i in range(num_logits)])
        for r in records:
            w.writerow([r.sample_id, r.true_label] + [format_float(float(v)) for v in r.predicted])
    else:
        w.writerow(PRED_HEADER)
        for r in records:
            w.writerow([r.sample_id, r.true_label, r.predicted_label()])
    return buf.getvalue()


def read_counts(path) -> np.ndarray:
    """Parse ``class_id,count`` rows; class ids must run 0..C-1 in order."""
    rows = _rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError("empty counts file", path=path) from None
    if header != ["class_id", "count"]:
        raise ParseError(f"expected header 'class_id,count', got {header!r}", line=lineno, path=path)
    counts = []
    for lineno, row in rows:
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno, path=path)
        cid = _int(row[0], path, lineno, "class_id")
        if cid != len(counts):
            raise ParseError(f"class_id {cid} out of order, expected {len(counts)}", line=lineno, path=path)
        n = _int(row[1], path, lineno, "count")
        if n < 0:
            raise ParseError(f"negative count {n}", line=lineno, path=path)
        counts.append(n)
    if len(counts) < 2:
        raise ParseError("counts file needs at least 2 classes", path=path)
    return np.array(counts, dtype=np.int64)


def format_counts(counts) -> str:
    lines = ["class_id,count"] + [f"{i},{int(n)}" for i, n in enumerate(counts)]
    return "\n".join(lines) + "\n"


def read_labels(path) -> np.ndarray:
    """One integer label per line, or a CSV with an ``index,label`` header."""
    labels = []
    col = 0
    for lineno, row in _rows(path):
        if lineno == 1 and row and not row[-1].lstrip("-").isdigit():
            if row == ["label"]:
                continue
            if row == ["index", "label"]:
                col = 1
                continue
            raise ParseError(f"unexpected header {row!r}", line=lineno, path=path)
        if len(row) != col + 1:
            raise ParseError(f"expected {col + 1} fields, got {len(row)}", line=lineno, path=path)
        labels.append(_int(row[col], path, lineno, "label"))
    return np.array(labels, dtype=np.int64)


def format_split(indices, labels) -> str:
    lines = ["index,label"] + [f"{int(i)},{int(labels[i])}" for i in indices]
    return "\n".join(lines) + "\n"


def format_confusion_csv(cm: ConfusionMatrix) -> str:
    C = cm.num_classes
    lines = ["true_label," + ",".join(f"pred_{j}" for j in range(C))]
    lines += [f"{i}," + ",".join(str(int(v)) for v in cm.counts[i]) for i in range(C)]
    return "\n".join(lines) + "\n"


def read_confusion_csv(path) -> ConfusionMatrix:
    rows = list(_rows(path))
    if not rows:
        raise ParseError("empty confusion file", path=path)
    lineno, header = rows[0]
    C = len(header) - 1
    if header != ["true_label"] + [f"pred_{j}" for j in range(C)]:
        raise ParseError(f"unexpected header {header!r}", line=lineno, path=path)
    if len(rows) - 1 != C:
        raise ParseError(f"expected {C} matrix rows, got {len(rows) - 1}", path=path)
    counts = np.zeros((C, C), dtype=np.int64)
    for i, (lineno, row) in enumerate(rows[1:]):
        if len(row) != C + 1 or _int(row[0], path, lineno, "true_label") != i:
            raise ParseError(f"malformed matrix row for class {i}", line=lineno, path=path)
        counts[i] = [_int(v, path, lineno, "count") for v in row[1:]]
    return ConfusionMatrix(counts)


# ---- report documents -------------------------------------------------------

def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    s = f"{x:.17g}"
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return "null" if math.isnan(x) else format_float(x)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, type(None))) and not isinstance(v, bool)
               for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(doc: dict, indent: int = 2) -> str:
    """Serialize a report tree; floats get 17 significant digits, NaN becomes null."""
    return _encode(doc, indent, 0) + "\n"


def loads_report(text: str) -> dict:
    return json.loads(text)


def write_report(path, doc: dict) -> None:
    atomic_write(path, dumps_report(doc))


def read_report(path) -> dict:
    try:
        return loads_report(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, path=path) from exc


def fixture_path(name: str) -> Path:
    """Path to a data file shipped in ``ltpdc/fixtures``."""
    return Path(__file__).parent / "fixtures" / name
