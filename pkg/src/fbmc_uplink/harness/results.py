"""Result tables: CSV / JSON-lines output and a CSV reader."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER = ("snr_db", "metric", "value", "stderr", "trials")
META_PREFIX = "# "


@dataclass(frozen=True)
class Row:
    snr_db: float
    metric: str
    value: float
    stderr: float
    trials: int

    def __post_init__(self) -> None:
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")


@dataclass
class ResultTable:
    rows: list[Row] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def add(self, snr_db: float, metric: str, samples: np.ndarray) -> None:
        """Append the mean of per-trial ``samples`` with its standard error."""
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            raise ValueError(f"no samples for {metric}")
        if np.all(samples == samples[0]):
            # deterministic quantities: report the value itself, not a rounded mean
            value, stderr = float(samples[0]), 0.0
        else:
            value = float(samples.mean())
            stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        self.rows.append(Row(float(snr_db), metric, value, stderr, int(n)))

    def metrics(self) -> list[str]:
        return list(dict.fromkeys(r.metric for r in self.rows))

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(snr_db, value, stderr)`` arrays of one metric, in row order."""
        sel = [r for r in self.rows if r.metric == metric]
        if not sel:
            raise KeyError(metric)
        return (
            np.array([r.snr_db for r in sel]),
            np.array([r.value for r in sel]),
            np.array([r.stderr for r in sel]),
        )

    def value(self, metric: str, snr_db: float) -> float:
        for r in self.rows:
            if r.metric == metric and r.snr_db == snr_db:
                return r.value
        raise KeyError((metric, snr_db))


def _meta_line(metadata: dict[str, str]) -> str:
    return META_PREFIX + " ".join(f"{k}={v}" for k, v in metadata.items())


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    buf.write(_meta_line(table.metadata) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in table.rows:
        writer.writerow([repr(r.snr_db), r.metric, repr(r.value), repr(r.stderr), r.trials])
    return buf.getvalue()


def to_jsonl(table: ResultTable) -> str:
    lines = [json.dumps({"metadata": table.metadata}, sort_keys=True)]
    for r in table.rows:
        lines.append(json.dumps(dict(zip(HEADER, (r.snr_db, r.metric, r.value, r.stderr, r.trials)))))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> ResultTable:
    lines = text.splitlines()
    metadata: dict[str, str] = {}
    if lines and lines[0].startswith(META_PREFIX):
        for item in lines[0][len(META_PREFIX):].split():
            k, _, v = item.partition("=")
            metadata[k] = v
        lines = lines[1:]
    reader = csv.reader(lines)
    header = next(reader, None)
    if tuple(header or ()) != HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = [
        Row(float(s), m, float(v), float(e), int(n)) for s, m, v, e, n in reader
    ]
    return ResultTable(rows, metadata)


def csv_body(text: str) -> str:
    """CSV text without its metadata line."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def emit(
    table: ResultTable,
    out_dir: str | os.PathLike,
    fmt: str = "csv",
    stem: str = "results",
    echo: bool = True,
) -> Path:
    """Write ``table`` as ``<out_dir>/<stem>.<fmt>`` and print a summary."""
    if not table.rows:
        raise ValueError("result table is empty; nothing written")
    if fmt == "csv":
        text = to_csv(table)
    elif fmt == "jsonl":
        text = to_jsonl(table)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or jsonl")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.{fmt}"
    path.write_text(text, encoding="utf-8")
    if echo:
        print(summary(table))
    return path


def summary(table: ResultTable) -> str:
    width = max([len(m) for m in table.metrics()] + [6])
    lines = [f"{'snr_db':>8}  {'metric':<{width}}  {'value':>13}  {'stderr':>11}  {'trials':>6}"]
    for r in table.rows:
        lines.append(
            f"{r.snr_db:>8.2f}  {r.metric:<{width}}  {r.value:>13.6g}  {r.stderr:>11.4g}  {r.trials:>6d}"
        )
    return "\n".join(lines)
