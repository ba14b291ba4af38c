"""CSV, line-delimited log and summary writers for episode results."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path as FsPath

from .errors import ExploreError
from .harness import EpisodeMetrics, EpisodeResult

CSV_COLUMNS = (
    "step",
    "time_s",
    "explored_volume_m3",
    "volume_increment_m3_s",
    "distance_traveled_m",
    "n_sers",
    "decision",
    "selected_ser_id",
    "anchor_keyframe_id",
)


class ReportError(ExploreError, OSError):
    """Writing a report file failed; the message names the path."""


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".6g")
    return str(value)


def metrics_csv(metrics: EpisodeMetrics | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in metrics.rows if metrics is not None else ():
        w.writerow([fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def log_jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def read_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write(path, text: str) -> FsPath:
    path = FsPath(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def export_report(metrics: EpisodeMetrics | None, path, title: str = "") -> tuple[FsPath, FsPath]:
    """Write ``path`` as the metrics CSV and an SVG chart next to it.

    Returns (csv_path, svg_path). The SVG shares the CSV's stem.
    """
    from .plotting import volume_figure, save_svg

    csv_path = _write(path, metrics_csv(metrics))
    svg_path = csv_path.with_suffix(".svg")
    try:
        save_svg(volume_figure(metrics, title=title), svg_path)
    except OSError as exc:
        raise ReportError(f"cannot write {svg_path}: {exc.strerror or exc}") from exc
    return csv_path, svg_path


def write_log(records, path) -> FsPath:
    return _write(path, log_jsonl(records))


def episode_summary(result: EpisodeResult) -> dict:
    m = result.metrics
    return {
        "planner": m.planner,
        "status": m.status,
        "coverage_fraction": m.coverage_fraction,
        "distance_traveled_m": m.total_path_length,
        "distance_at_95_m": m.distance_at_coverage(0.95),
        "steps": m.steps,
        "keyframes": len(result.store),
        "global_decisions": m.global_plan_count,
        "stalls": m.stall_count,
        "done_warning": m.done_warning,
    }


def summary_csv(summaries: list[dict], extra: dict | None = None) -> str:
    """One row per episode; ``extra`` columns are repeated on every row."""
    if not summaries:
        return ""
    extra = extra or {}
    cols = list(summaries[0]) + list(extra)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for s in summaries:
        merged = {**s, **extra}
        w.writerow([fmt(merged[c]) for c in cols])
    return buf.getvalue()


def write_summary(summaries, path, extra=None) -> FsPath:
    return _write(path, summary_csv(summaries, extra))
