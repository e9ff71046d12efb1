"""Experiment reports and their CSV / JSON serialisation.

Numbers are written as shortest round-trip decimals (Python ``repr``) so that
a rerun with the same seed reproduces the file byte for byte.  Wall-clock
time is kept on the object for logging but never serialised.
"""
import io
import json
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
BASE_COLUMNS = ("n", "replicas", "mean", "var", "rel_var", "ratio", "stderr")


def format_number(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if hasattr(x, "item"):
        return format_number(x.item())
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return format_number(x)
    return x


def git_describe():
    """``git describe --always --dirty`` of the source tree, or ``unknown``."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


@dataclass(eq=False)
class ExperimentReport:
    """Rows of per-``n`` statistics plus metadata.

    ``samples`` holds the raw per-row samples (not serialised) for callers
    that need more than the summary columns.
    """

    experiment: str
    master_seed: int
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    runtime: float = 0.0

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r["n"])

    def column(self, name):
        return [row[name] for row in self.rows]

    def row(self, n):
        for r in self.rows:
            if r["n"] == n:
                return r
        raise KeyError(n)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(format_number(r.get(c, float("nan"))) for c in self.columns) + "\n")
        return buf.getvalue()

    def to_dict(self):
        return {
            "version": SCHEMA_VERSION,
            "master_seed": self.master_seed,
            "git_describe": git_describe(),
            "experiment": self.experiment,
            "metadata": _jsonable(self.metadata),
            "columns": list(self.columns),
            "rows": [{c: _jsonable(r.get(c)) for c in self.columns} for r in self.rows],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, path, fmt="csv"):
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        text = self.to_csv() if fmt == "csv" else self.to_json()
        Path(path).write_text(text)
        return text
