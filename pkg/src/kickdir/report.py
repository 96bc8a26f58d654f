"""Rendering: aligned text tables, a flat key=value report format, and
self-contained SVG confusion heatmaps. All output is deterministic so a
re-render of the same run is byte-identical."""

import numpy as np

from .errors import DataError
from .metrics import SUBGROUP_KEYS

SUBGROUP_LABELS = {
    "side_right": "side right",
    "side_left": "side left",
    "foot_right": "foot right",
    "foot_left": "foot left",
}


def _pct(x):
    return f"{100.0 * x:.2f}"


def metric_row(label, report):
    """Flatten a MetricReport into a table row tuple."""
    return (label, report.accuracy, report.macro_precision,
            report.macro_recall, report.macro_f1)


def render_metrics_table(rows):
    """Aligned accuracy/precision/recall/F1 table, one row per entry."""
    lines = [f"{'':<26}{'acc':>8}{'prec':>8}{'rec':>8}{'f1':>8}"]
    for label, acc, p, r, f1 in rows:
        lines.append(f"{label:<26}{_pct(acc):>8}{_pct(p):>8}"
                     f"{_pct(r):>8}{_pct(f1):>8}")
    return "\n".join(lines) + "\n"


def render_subgroup_table(subgroups):
    """Per-subgroup accuracy/error table; absent groups are marked."""
    lines = [f"{'group':<14}{'n':>6}{'acc':>8}{'err':>8}"]
    for key in SUBGROUP_KEYS:
        stats = subgroups.get(key)
        label = SUBGROUP_LABELS[key]
        if stats is None:
            lines.append(f"{label:<14}{'absent':>6}")
        else:
            lines.append(f"{label:<14}{stats.count:>6}"
                         f"{_pct(stats.accuracy):>8}{_pct(stats.error):>8}")
    return "\n".join(lines) + "\n"


def render_confusion_text(cm, names):
    """Counts with row percentages, rows = true class."""
    width = max(10, max(len(n) for n in names) + 2)
    norm = cm.row_normalized()
    header = f"{'true/pred':<{width}}" + "".join(
        f"{n:>{width}}" for n in names)
    lines = [header]
    for i, name in enumerate(names):
        cells = "".join(
            f"{cm.counts[i, j]:>{width - 8}}{' (' + f'{100 * norm[i, j]:.1f}' + '%)':<8}"
            for j in range(len(names)))
        lines.append(f"{name:<{width}}" + cells)
    return "\n".join(lines) + "\n"


def _cell_color(v):
    """Linear white -> deep blue ramp over the row-normalized value."""
    r = round(255 + (33 - 255) * v)
    g = round(255 + (102 - 255) * v)
    b = round(255 + (172 - 255) * v)
    return f"rgb({r},{g},{b})"


def confusion_svg(cm, names, title="confusion matrix"):
    """Standalone vector heatmap: one cell per (true, predicted) pair,
    annotated with the raw count and the row percentage."""
    n = cm.n_classes
    if len(names) != n:
        raise ValueError("class name count does not match the matrix")
    cw, ch = 110, 80
    left, top = 100, 70
    width = left + n * cw + 20
    height = top + n * ch + 40
    norm = cm.row_normalized()
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + n * cw / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    for j, name in enumerate(names):
        x = left + j * cw + cw / 2
        parts.append(f'<text x="{x:.0f}" y="{top - 12}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{name}</text>')
    for i, name in enumerate(names):
        y = top + i * ch + ch / 2
        parts.append(f'<text x="{left - 10}" y="{y:.0f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="13" '
                     f'dominant-baseline="middle">{name}</text>')
    for i in range(n):
        for j in range(n):
            v = norm[i, j]
            x, y = left + j * cw, top + i * ch
            text_fill = "white" if v > 0.5 else "black"
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" '
                f'fill="{_cell_color(v)}" stroke="#777"/>')
            parts.append(
                f'<text x="{x + cw / 2:.0f}" y="{y + ch / 2 - 6:.0f}" '
                f'text-anchor="middle" font-family="sans-serif" '
                f'font-size="16" fill="{text_fill}">{cm.counts[i, j]}</text>')
            parts.append(
                f'<text x="{x + cw / 2:.0f}" y="{y + ch / 2 + 16:.0f}" '
                f'text-anchor="middle" font-family="sans-serif" '
                f'font-size="12" fill="{text_fill}">{100 * v:.1f}%</text>')
    parts.append(
        f'<text x="{left + n * cw / 2:.0f}" y="{height - 10}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="13">'
        f'predicted</text>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


# ------------------------------------------------------------- key=value


def render_kv(pairs):
    """Flat key=value lines; floats use repr so parsing is lossless."""
    lines = []
    for key, value in pairs:
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_kv(text):
    """Inverse of render_kv; values come back as strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"line {lineno}: expected key=value")
        if key in out:
            raise DataError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _report_pairs(prefix, report, names):
    pairs = [
        (f"{prefix}.n", report.n_samples),
        (f"{prefix}.accuracy", report.accuracy),
        (f"{prefix}.macro_precision", report.macro_precision),
        (f"{prefix}.macro_recall", report.macro_recall),
        (f"{prefix}.macro_f1", report.macro_f1),
    ]
    for c, name in enumerate(names):
        pairs.append((f"{prefix}.precision.{name}", float(report.precision[c])))
        pairs.append((f"{prefix}.recall.{name}", float(report.recall[c])))
        pairs.append((f"{prefix}.f1.{name}", float(report.f1[c])))
    return pairs


def build_crossval_kv(n_classes, names, fold_reports, mean_rep, pooled_cm,
                      gk_report=None):
    """Everything a crossval run reports, as ordered key/value pairs."""
    pairs = [("n_classes", n_classes), ("folds", len(fold_reports))]
    for fold, report in enumerate(fold_reports):
        pairs.extend(_report_pairs(f"fold.{fold}", report, names))
    pairs.extend(_report_pairs("mean", mean_rep, names))
    for key in SUBGROUP_KEYS:
        stats = mean_rep.subgroups.get(key)
        if stats is None:
            pairs.append((f"subgroup.{key}.n", 0))
        else:
            pairs.append((f"subgroup.{key}.n", stats.count))
            pairs.append((f"subgroup.{key}.accuracy", stats.accuracy))
    if gk_report is not None:
        pairs.extend(_report_pairs("gk", gk_report, names))
    for i, tname in enumerate(names):
        for j, pname in enumerate(names):
            pairs.append((f"confusion.{tname}.{pname}",
                          int(pooled_cm.counts[i, j])))
    return pairs


def build_ablation_kv(rows):
    """rows: list of (branch-set label, MetricReport)."""
    pairs = [("rows", len(rows))]
    for idx, (label, report) in enumerate(rows):
        pairs.append((f"row.{idx}.branches", label))
        pairs.append((f"row.{idx}.accuracy", report.accuracy))
        pairs.append((f"row.{idx}.macro_precision", report.macro_precision))
        pairs.append((f"row.{idx}.macro_recall", report.macro_recall))
        pairs.append((f"row.{idx}.macro_f1", report.macro_f1))
    return pairs
