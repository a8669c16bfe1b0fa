"""Deterministic result emission: CSV/JSON reports and text confusion matrices.

All real numbers are serialized with 6 significant digits, CSV uses UTF-8,
comma separators and LF line endings, JSON keeps a fixed key order, and
re-emitting the same object is byte-identical.
"""

from __future__ import annotations

import json

import numpy as np

from .episodes import AblationCell, EvalReport
from .errors import ValidationError
from .tsne import EmbeddingPoint


def fmt6(value: float) -> str:
    """6-significant-digit, locale-independent decimal rendering."""
    return format(float(value), ".6g")


def round6(value: float) -> float:
    return float(fmt6(value))


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _eval_csv(report: EvalReport) -> str:
    lines = ["episode,accuracy"]
    for i, acc in enumerate(report.per_episode_accuracy):
        lines.append(f"{i},{fmt6(acc)}")
    lines.append(f"mean,{fmt6(report.mean)}")
    lines.append(f"std,{fmt6(report.std)}")
    return "\n".join(lines) + "\n"


def _eval_json(report: EvalReport) -> str:
    payload = {
        "per_episode_accuracy": [round6(a) for a in report.per_episode_accuracy],
        "mean": round6(report.mean),
        "std": round6(report.std),
        "confusion": report.confusion.tolist(),
    }
    return json.dumps(payload, indent=2) + "\n"


def _structure_label(structure) -> str:
    return "-".join(str(int(h)) for h in structure)


def _ablation_csv(cells) -> str:
    lines = ["backbones,reshape,hidden,status,accuracy_mean,accuracy_std"]
    for cell in cells:
        mean = "" if cell.accuracy_mean is None else fmt6(cell.accuracy_mean)
        std = "" if cell.accuracy_std is None else fmt6(cell.accuracy_std)
        lines.append(
            f"{'+'.join(cell.backbone_subset)},{cell.reshape_s},"
            f"{_structure_label(cell.mlp_structure)},{cell.status},{mean},{std}"
        )
    return "\n".join(lines) + "\n"


def _ablation_json(cells) -> str:
    payload = [
        {
            "backbones": list(cell.backbone_subset),
            "reshape": cell.reshape_s,
            "hidden": list(cell.mlp_structure),
            "status": cell.status,
            "accuracy_mean": None if cell.accuracy_mean is None else round6(cell.accuracy_mean),
            "accuracy_std": None if cell.accuracy_std is None else round6(cell.accuracy_std),
        }
        for cell in cells
    ]
    return json.dumps(payload, indent=2) + "\n"


def _embedding_csv(points, class_names=None) -> str:
    lines = ["x,y,label,class_name,image_id"]
    for pt in points:
        name = class_names[pt.label] if class_names else str(pt.label)
        lines.append(f"{fmt6(pt.x)},{fmt6(pt.y)},{pt.label},{name},{pt.key[1]}")
    return "\n".join(lines) + "\n"


def _embedding_json(points, class_names=None) -> str:
    payload = [
        {
            "x": round6(pt.x),
            "y": round6(pt.y),
            "label": pt.label,
            "class_name": class_names[pt.label] if class_names else str(pt.label),
            "image_id": pt.key[1],
        }
        for pt in points
    ]
    return json.dumps(payload, indent=2) + "\n"


def emit_report(report, path, format: str = "csv", class_names=None) -> None:
    """Write an EvalReport, ablation cell list, or embedding point list.

    The same object always serializes to the same bytes (stable column
    order, fixed float formatting, LF endings).
    """
    if format not in ("csv", "json"):
        raise ValidationError(f"unknown report format {format!r}")
    if isinstance(report, EvalReport):
        text = _eval_csv(report) if format == "csv" else _eval_json(report)
    elif isinstance(report, (list, tuple)) and report and isinstance(report[0], AblationCell):
        text = _ablation_csv(report) if format == "csv" else _ablation_json(report)
    elif isinstance(report, (list, tuple)) and report and isinstance(report[0], EmbeddingPoint):
        text = (
            _embedding_csv(report, class_names)
            if format == "csv"
            else _embedding_json(report, class_names)
        )
    else:
        raise ValidationError(f"cannot emit object of type {type(report).__name__}")
    _write_text(path, text)


def render_confusion(confusion: np.ndarray, class_names) -> str:
    """Aligned text table, rows true / columns predicted, with totals."""
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValidationError(f"confusion must be square, got {confusion.shape}")
    n = confusion.shape[0]
    if len(class_names) != n:
        raise ValidationError(f"{len(class_names)} names for a {n}x{n} matrix")
    row_totals = confusion.sum(axis=1)
    col_totals = confusion.sum(axis=0)
    name_w = max(len("true \\ pred"), len("total"), *(len(c) for c in class_names))
    cell_w = max(5, *(len(str(c)) for c in class_names), len(str(int(confusion.sum()))))

    def row(label, values, total):
        cells = "".join(f"{v:>{cell_w + 2}}" for v in values)
        return f"{label:<{name_w}}{cells}{total:>{cell_w + 4}}"

    header = row("true \\ pred", list(class_names), "total")
    lines = [header, "-" * len(header)]
    for i in range(n):
        lines.append(row(class_names[i], list(confusion[i]), int(row_totals[i])))
    lines.append("-" * len(header))
    lines.append(row("total", list(col_totals), int(confusion.sum())))
    return "\n".join(lines) + "\n"
