"""CSV datasets in, JSON reports and CSV traces out."""
from __future__ import annotations

import csv
import math

import numpy as np

from .smoothing import SpatialDataset

DATA_COLUMNS = ("x", "y", "z")
TRACE_COLUMNS = ["h1", "h2", "p_value", "t_n", "reason"]


class DatasetParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def read_dataset(path) -> SpatialDataset:
    """Read a ``x,y,z`` CSV file with a header row.

    Column order is free but the names ``x``, ``y`` and ``z`` must appear in
    the header; other columns are ignored.  Lines starting with ``#`` (for
    example a units row such as ``# miles,miles,feet``) are skipped.
    """
    with open(path, newline="") as fh:
        lines = list(enumerate(fh, start=1))
    content = [(no, ln) for no, ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not content:
        raise DatasetParseError("file is empty")
    header_no, header_line = content[0]
    header = [h.strip().lower() for h in next(csv.reader([header_line]))]
    missing = [c for c in DATA_COLUMNS if c not in header]
    if missing:
        raise DatasetParseError(f"header lacks column(s) {', '.join(missing)}", header_no)
    cols = [header.index(c) for c in DATA_COLUMNS]
    rows = []
    for no, ln in content[1:]:
        cells = next(csv.reader([ln]))
        if len(cells) < len(header):
            raise DatasetParseError(f"expected {len(header)} fields, got {len(cells)}", no)
        vals = []
        for c in cols:
            try:
                v = float(cells[c])
            except ValueError:
                raise DatasetParseError(f"non-numeric value {cells[c].strip()!r} in column "
                                        f"{header[c]!r}", no) from None
            if not math.isfinite(v):
                raise DatasetParseError(f"non-finite value in column {header[c]!r}", no)
            vals.append(v)
        rows.append(vals)
    if len(rows) < 4:
        raise DatasetParseError(f"need at least 4 data rows, got {len(rows)}")
    arr = np.array(rows)
    return SpatialDataset(arr[:, :2], arr[:, 2])


def write_dataset(data: SpatialDataset, path_or_buf):
    """Write ``x,y,z`` with round-trip exact float formatting."""
    if not hasattr(path_or_buf, "write"):
        with open(path_or_buf, "w", newline="") as fh:
            return write_dataset(data, fh)
    w = csv.writer(path_or_buf, lineterminator="\n")
    w.writerow(DATA_COLUMNS)
    for (x, y), z in zip(data.locations, data.responses):
        w.writerow([repr(float(x)), repr(float(y)), repr(float(z))])


def write_trace(entries, path_or_buf):
    """Trace rows ``h1,h2,p_value,t_n,reason``; failed bandwidths get ``NA``."""
    if not hasattr(path_or_buf, "write"):
        with open(path_or_buf, "w", newline="") as fh:
            return write_trace(entries, fh)
    w = csv.writer(path_or_buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for e in entries:
        h1, h2 = e.bandwidth.diagonal[:2]
        if e.p_value is None:
            w.writerow([repr(h1), repr(h2), "NA", "NA", e.error])
        else:
            w.writerow([repr(h1), repr(h2), repr(float(e.p_value)), repr(float(e.report.t_n)), ""])
