"""Result container and its JSON, CSV and plain-text renderings."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import StatsReport

FORMATS = ("json", "csv", "text")

# mkstemp creates 0600 files; reports get the usual permissions instead
_UMASK = os.umask(0)
os.umask(_UMASK)


@dataclass
class RunResult:
    """Everything one experiment produced.

    ``measurements`` holds fabric statistics; ``rows`` holds mode-specific
    records (analytic figures, litmus rows, memory checks), each a flat dict.
    """
    name: str
    mode: str
    seed: int
    status: str = "PASS"
    measurements: list[StatsReport] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    trace: list[str] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in ("PASS", "WEAK-PASS")

    def to_dict(self) -> dict:
        return {"name": self.name, "mode": self.mode, "seed": self.seed, "status": self.status,
                "measurements": [m.to_dict() for m in self.measurements],
                "rows": self.rows, "notes": self.notes}

    @classmethod
    def from_dict(cls, d: dict) -> RunResult:
        return cls(d["name"], d["mode"], d["seed"], d["status"],
                   [StatsReport.from_dict(m) for m in d["measurements"]],
                   d["rows"], d["notes"])

    def records(self) -> list[dict]:
        """One flat record per measurement, for tabular output."""
        if self.measurements:
            return [m.flat() for m in self.measurements]
        return self.rows


def render(result: RunResult, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        recs = result.records()
        buf = io.StringIO()
        cols: list[str] = []
        for r in recs:
            cols.extend(k for k in r if k not in cols)
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in recs:
            w.writerow({k: "" if r.get(k) is None else r.get(k) for k in cols})
        return buf.getvalue()
    if fmt == "text":
        return summary(result)
    raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def summary(result: RunResult) -> str:
    lines = [f"{result.name} [{result.mode}] seed={result.seed} status={result.status}"]
    for m in result.measurements:
        lines.append(f"  {m.label or m.pattern} rate={m.rate:g} window={m.window} cycles")
        for p, name in enumerate(("rmesh", "cmesh", "xmesh")):
            if not m.injected[p]:
                continue
            lines.append(f"    {name}: injected={m.injected[p]} delivered={m.delivered[p]} "
                         f"throughput={_fmt(m.throughput[p])} B/cyc "
                         f"cut={_fmt(m.cut_throughput[p])} B/cyc "
                         f"latency mean={_fmt(m.latency_mean[p])} p99={_fmt(m.latency_p99[p])} "
                         f"max={_fmt(m.latency_max[p])} cyc")
        bad = {k: v for k, v in m.violations.items() if v}
        lines.append(f"    violations: {bad or 'none'}")
        if m.drained is not None:
            lines.append(f"    drained: {m.drained}")
    for r in result.rows:
        lines.append("  " + "  ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
    lines.extend(f"  note: {n}" for n in result.notes)
    return "\n".join(lines) + "\n"


def write_atomic(path: Path, text: str):
    """Write *text* to *path* through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(result: RunResult, path, fmt: str | None = None) -> Path:
    """Write *result* to *path*; the format defaults from the file suffix."""
    path = Path(path)
    if fmt is None:
        fmt = {".json": "json", ".csv": "csv"}.get(path.suffix, "text")
    write_atomic(path, render(result, fmt))
    return path
