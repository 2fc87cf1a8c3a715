"""CSV line samples, JSON-lines audit log and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

CSV_SCHEMA = "fracflow-line-v1"
LINE_COLUMNS = ("arclength", "x", "y", "S", "P", "S_gamma", "P_gamma", "aperture")
COMPARE_SCHEMA = "fracflow-compare-v1"
COMPARE_COLUMNS = ("arclength", "x", "y", "S_reduced", "S_full", "on_fracture", "valid")


def _num(v):
    v = float(v)
    return "" if not np.isfinite(v) else repr(v)


def write_line_csv(path, samples, meta=None):
    """Write :class:`~fracflow.mesh.sampling.LineSamples`; the first line is a
    comment carrying the schema version."""
    with open(path, "w", newline="") as fh:
        extra = "" if not meta else " " + " ".join(f"{k}={v}" for k, v in meta.items())
        fh.write(f"# schema={CSV_SCHEMA}{extra}\n")
        w = csv.writer(fh)
        w.writerow(LINE_COLUMNS)
        for i in range(len(samples.arclength)):
            w.writerow([_num(samples.arclength[i]), _num(samples.points[i, 0]), _num(samples.points[i, 1]),
                        _num(samples.S[i]), _num(samples.P[i]), _num(samples.S_gamma[i]),
                        _num(samples.P_gamma[i]), _num(samples.aperture[i])])


def write_compare_csv(path, comparison, meta=None):
    with open(path, "w", newline="") as fh:
        extra = "" if not meta else " " + " ".join(f"{k}={v}" for k, v in meta.items())
        fh.write(f"# schema={COMPARE_SCHEMA}{extra} l1_diff={comparison.l1_diff!r} "
                 f"l1_full={comparison.l1_full!r}\n")
        w = csv.writer(fh)
        w.writerow(COMPARE_COLUMNS)
        for row in comparison.rows():
            w.writerow([_num(v) if isinstance(v, float) else v for v in row])


def read_csv(path):
    """Return (header comment, column names, float array) of a CSV written here."""
    with open(path) as fh:
        head = fh.readline().rstrip("\n")
        rows = list(csv.reader(fh))
    cols = rows[0]
    vals = np.array([[float(v) if v != "" else np.nan for v in r] for r in rows[1:]]).reshape(-1, len(cols))
    return head, cols, vals


# wall-clock fields go to the manifest so that logs of identical runs are byte-identical
_VOLATILE = ("wall_time",)


class AuditLog:
    """One JSON object per accepted step."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")

    def write(self, report):
        rec = report.as_dict() if hasattr(report, "as_dict") else dict(report)
        rec = {k: (float(v) if isinstance(v, (np.floating,)) else int(v) if isinstance(v, np.integer) else v)
               for k, v in rec.items() if k not in _VOLATILE}
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_audit(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


@dataclass
class RunManifest:
    scenario: str
    scenario_hash: str
    mode: str
    resolution: float
    dt: float
    t_end: float
    newton: dict
    output_dir: str
    version: str
    seed: int | None = None
    timings: dict = field(default_factory=dict)

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
