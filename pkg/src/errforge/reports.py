"""Report rendering: delimited files, aligned text, and figures.

Metric tables stay pure data in :mod:`errforge.metrics`; this module
owns presentation. Every table is written as CSV plus an aligned
plain-text rendering, and the CLI report commands additionally render
a matplotlib figure next to the delimited output.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

from .metrics import ReportTable


def write_table(table: ReportTable, out_base: str | Path) -> tuple[Path, Path]:
    """Write <base>.csv and <base>.txt; returns both paths."""
    base = Path(out_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    txt_path = base.with_suffix(".txt")
    header = [table.group_by, *table.columns, "n"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for group in table.rows:
            writer.writerow(
                [group]
                + [_fmt(table.rows[group][c]) for c in table.columns]
                + [table.counts.get(group, 0)]
            )
    txt_path.write_text(render_text(table), encoding="utf-8")
    return csv_path, txt_path


def render_text(table: ReportTable) -> str:
    header = [table.group_by, *table.columns, "n"]
    rows = [
        [group]
        + [_fmt(table.rows[group][c]) for c in table.columns]
        + [str(table.counts.get(group, 0))]
        for group in table.rows
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_curve_figure(
    curves: Mapping[str, Mapping[int, float]], out_png: str | Path, title: str
) -> Path:
    """Acceptance-vs-budget line plot, one line per group."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        ks = sorted(curve)
        ax.plot(ks, [curve[k] for k in ks], marker="o", label=label)
    ax.set_xlabel("retry budget k (attempts)")
    ax.set_ylabel("acceptance@k")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(curves) > 1:
        ax.legend()
    out = Path(out_png)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def write_bar_figure(
    table: ReportTable,
    column: str,
    out_png: str | Path,
    title: str,
    ylabel: str | None = None,
) -> Path:
    """Bar chart of one table column across groups."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = list(table.rows)
    values = [table.rows[g][column] for g in groups]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(groups)), 4))
    ax.bar(groups, values)
    ax.set_ylabel(ylabel or column)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    for tick in ax.get_xticklabels():
        tick.set_rotation(30)
        tick.set_ha("right")
    out = Path(out_png)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
