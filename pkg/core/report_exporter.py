# core/report_exporter.py
"""
Export of evaluation reports: per-class score table text, `class metric value` lines,
CSV, JSON and HTML (pandas)
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from .metrics import ACCURACY_DEFINITION, Discrepancy, MetricsReport

logger = logging.getLogger(__name__)

METRIC_LABELS = [
    ("pre", "Pre"),
    ("sen", "Sen"),
    ("f1", "F1-score"),
    ("f2", "F2-score"),
    ("dice", "Dice-coefficient"),
    ("ap", "AP"),
]
COUNT_COLUMNS = ["tp", "fp", "fn", "tn", "duplicates"]


def _json_default(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def report_frame(report: MetricsReport) -> pd.DataFrame:
    """One row per class: counts then metrics"""
    records = []
    for row in report.classes:
        record: Dict[str, Any] = {"class": row.name}
        record.update({col: getattr(row, col) for col in COUNT_COLUMNS})
        record.update({key: getattr(row, key) for key, _ in METRIC_LABELS})
        records.append(record)
    return pd.DataFrame.from_records(records, columns=["class"] + COUNT_COLUMNS + [k for k, _ in METRIC_LABELS])


def _records(report: MetricsReport) -> List[Dict[str, Any]]:
    frame = report_frame(report).astype(object)
    return frame.where(frame.notna(), None).to_dict(orient="records")


class MetricsReportExporter:
    """Render MetricsReport objects in the supported formats"""

    FORMATS = ("text", "lines", "csv", "json", "html")

    def export(self, report: MetricsReport, format_type: str = "text") -> Dict[str, Any]:
        format_type = format_type.lower()
        renderers = {
            "text": (self.to_text, "txt", "text/plain"),
            "lines": (self.to_lines, "metrics", "text/plain"),
            "csv": (self.to_csv, "csv", "text/csv"),
            "json": (self.to_json, "json", "application/json"),
            "html": (self.to_html, "html", "text/html"),
        }
        if format_type not in renderers:
            raise ValueError(f"unsupported report format: {format_type}")
        render, suffix, mime = renderers[format_type]
        return {
            "format": format_type,
            "data": render(report),
            "filename": f"report.{suffix}",
            "mime_type": mime,
        }

    def to_text(self, report: MetricsReport) -> str:
        lines: List[str] = []
        if report.title:
            lines.append(report.title)
        lines.append(f"# {ACCURACY_DEFINITION}")
        width = max(len(label) for _, label in METRIC_LABELS)
        for row in report.classes:
            lines.append(f"{row.name} class  (TP {row.tp}  FP {row.fp}  FN {row.fn}  TN {row.tn}"
                         f"  duplicates {row.duplicates})")
            for key, label in METRIC_LABELS:
                lines.append(f"  {label:<{width}}  {_fmt(getattr(row, key)):>7}")
        lines.append(f"mAP       {report.map:.2f}")
        lines.append(f"accuracy  {report.accuracy:.2f}")
        if report.latency is not None:
            lat = report.latency
            lines.append(f"latency   mean {lat.mean * 1e3:.3f} ms  min {lat.min * 1e3:.3f} ms"
                         f"  max {lat.max * 1e3:.3f} ms  ({lat.repetitions} reps)")
        for flag in report.flags:
            lines.append(f"[flag] {flag}")
        return "\n".join(lines) + "\n"

    def to_lines(self, report: MetricsReport) -> str:
        out: List[str] = []
        for row in report.classes:
            for key in COUNT_COLUMNS:
                out.append(f"{row.name} {key} {getattr(row, key)}")
            for key, _ in METRIC_LABELS:
                value = getattr(row, key)
                out.append(f"{row.name} {key} {'nan' if value is None else f'{value:.6f}'}")
        out.append(f"all map {report.map:.6f}")
        out.append(f"all accuracy {report.accuracy:.6f}")
        if report.latency is not None:
            for key, value in report.latency.as_dict().items():
                out.append(f"all latency_{key} {value:.9g}")
        return "\n".join(out) + "\n"

    def to_csv(self, report: MetricsReport) -> str:
        return report_frame(report).to_csv(index=False, float_format="%.6f")

    def to_json(self, report: MetricsReport) -> str:
        payload = {
            "title": report.title,
            "classes": _records(report),
            "map": report.map,
            "accuracy": report.accuracy,
            "accuracy_definition": ACCURACY_DEFINITION,
            "latency": report.latency.as_dict() if report.latency else None,
            "flags": report.flags,
        }
        return json.dumps(payload, indent=2, default=_json_default)

    def to_html(self, report: MetricsReport) -> str:
        table = report_frame(report).to_html(index=False, float_format=lambda v: f"{v:.2f}", na_rep="n/a")
        flags = "".join(f"<li>{flag}</li>" for flag in report.flags)
        return f"""<!DOCTYPE html>
<html>
<head><meta charset="UTF-8"><title>{report.title or 'Detection report'}</title></head>
<body>
<h1>{report.title or 'Detection report'}</h1>
<p>mAP {report.map:.2f} &middot; accuracy {report.accuracy:.2f} ({ACCURACY_DEFINITION})</p>
{table}
<ul>{flags}</ul>
<p>generated {datetime.now().isoformat(timespec='seconds')}</p>
</body>
</html>
"""

    def write(self, report: MetricsReport, out_dir: Union[str, Path], stem: str = "report",
              formats: Sequence[str] = ("text", "lines", "csv", "json")) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for format_type in formats:
            exported = self.export(report, format_type)
            suffix = exported["filename"].split(".", 1)[1]
            path = out_dir / f"{stem}.{suffix}"
            path.write_text(exported["data"], encoding="utf-8")
            written.append(path)
        logger.info("report written to %s (%s)", out_dir, ", ".join(formats))
        return written


def comparison_text(reports: Dict[str, MetricsReport]) -> str:
    """Side-by-side score table for several models (e.g. default vs improved)"""
    names = list(reports)
    if not names:
        return ""
    first = reports[names[0]]
    header = f"{'class':<12}{'metric':<18}" + "".join(f"{name:>12}" for name in names)
    lines = [header, "-" * len(header)]
    for index, row in enumerate(first.classes):
        for key, label in METRIC_LABELS:
            values = "".join(f"{_fmt(getattr(reports[n].classes[index], key)):>12}" for n in names)
            lines.append(f"{row.name:<12}{label:<18}{values}")
    lines.append(f"{'all':<12}{'mAP':<18}" + "".join(f"{reports[n].map:>12.2f}" for n in names))
    lines.append(f"{'all':<12}{'accuracy':<18}" + "".join(f"{reports[n].accuracy:>12.2f}" for n in names))
    return "\n".join(lines) + "\n"


def discrepancy_text(found: Sequence[Discrepancy]) -> str:
    if not found:
        return "all printed F1/F2/Dice values agree with the formulas\n"
    lines = [f"{'class':<12}{'model':<10}{'metric':<8}{'printed':>10}{'recomputed':>12}"]
    for item in found:
        lines.append(f"{item.class_name:<12}{item.model:<10}{item.metric:<8}"
                     f"{item.printed:>10.2f}{item.recomputed:>12.2f}")
    return "\n".join(lines) + "\n"
