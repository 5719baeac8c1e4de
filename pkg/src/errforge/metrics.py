"""Process metrics computed from run records.

Everything here is a pure function over record snapshots: outcome
labels, targeted-error rate, acceptance-vs-budget curves, retry
statistics, long-tail counts, per-cell cost shape, and subject
re-bucketing. Unlabeled cells are excluded from rate denominators and
reported as counts, never silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .backends import CellUsageTotal, nearest_rank
from .questions import SubjectMap
from .store import CellRecord, EffectiveRecord

OUTCOME_CORRECT = "correct"
OUTCOME_WRONG_CLASS = "incorrect_wrong_class"
OUTCOME_RIGHT_CLASS = "incorrect_right_class"
OUTCOMES = (OUTCOME_CORRECT, OUTCOME_WRONG_CLASS, OUTCOME_RIGHT_CLASS)

GROUP_KEYS: dict[str, Callable[[CellRecord], str]] = {
    "pipeline": lambda r: r.pipeline,
    "backend": lambda r: r.backend_id,
    "class": lambda r: f"E{r.error_class}",
    "all": lambda r: "all",
}


class MetricsError(ValueError):
    pass


class UnlabeledCellError(MetricsError):
    def __init__(self, cell_ids: list[str]):
        shown = ", ".join(cell_ids[:10])
        more = "" if len(cell_ids) <= 10 else f" (+{len(cell_ids) - 10} more)"
        super().__init__(f"unlabeled cells in a labeled-only metric: {shown}{more}")
        self.cell_ids = cell_ids


@dataclass
class ReportTable:
    """Rows keyed by group value; columns of reals plus a cell count n."""

    group_by: str
    columns: list[str]
    rows: dict[str, dict[str, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)


def outcome_of(eff: EffectiveRecord) -> str | None:
    """Three-way outcome, or None while the cell is unlabeled.

    Success is human_examination = 1 and not is_refusal; a flagged
    refusal demotes a human-1 cell to incorrect-wrong-class. A human-0
    cell takes the annotator's sublabel; absent a sublabel it counts as
    incorrect-wrong-class (either sub-outcome is a non-success).
    """
    human = eff.human_examination
    if human is None:
        return None
    if human == 1:
        return OUTCOME_WRONG_CLASS if eff.is_refusal else OUTCOME_RIGHT_CLASS
    return eff.sublabel or OUTCOME_WRONG_CLASS


def _group_fn(group_by: str) -> Callable[[CellRecord], str]:
    try:
        return GROUP_KEYS[group_by]
    except KeyError:
        raise MetricsError(
            f"unknown group_by {group_by!r}; expected one of {sorted(GROUP_KEYS)}"
        ) from None


def targeted_error_rate(
    records: Sequence[EffectiveRecord], group_by: str = "all"
) -> ReportTable:
    """Per-group fraction of incorrect-and-right-class over labeled cells."""
    unlabeled = [e.record.cell_id for e in records if e.human_examination is None]
    if unlabeled:
        raise UnlabeledCellError(unlabeled)
    key = _group_fn(group_by)
    table = ReportTable(group_by=group_by, columns=["targeted_error_rate"])
    groups: dict[str, list[str]] = {}
    for eff in records:
        groups.setdefault(key(eff.record), []).append(outcome_of(eff))
    for group, outcomes in sorted(groups.items()):
        hits = sum(1 for o in outcomes if o == OUTCOME_RIGHT_CLASS)
        table.rows[group] = {"targeted_error_rate": hits / len(outcomes)}
        table.counts[group] = len(outcomes)
    return table


def outcome_breakdown(records: Sequence[EffectiveRecord]) -> dict[str, int]:
    """Counts of the three outcomes plus unlabeled cells."""
    counts = {o: 0 for o in OUTCOMES}
    counts["unlabeled"] = 0
    for eff in records:
        out = outcome_of(eff)
        counts[out if out is not None else "unlabeled"] += 1
    return counts


def _loop_records(records: Iterable[CellRecord]) -> list[CellRecord]:
    return [r for r in records if not r.single_pass and not r.failed]


def acceptance_at_k(records: Sequence[CellRecord], k: int) -> float:
    """Fraction of loop cells accepted within k attempts.

    At k = cap every emitted cell counts (emitted-at-cap semantics),
    so the curve ends at 1.0 for fully-emitted runs.
    """
    loop = _loop_records(records)
    if not loop:
        raise MetricsError("acceptance_at_k needs loop-pipeline records")
    if k < 1:
        raise MetricsError(f"k must be >= 1, got {k}")
    hits = sum(
        1
        for r in loop
        if len(r.attempts) <= k and (r.ea_accepted or r.emitted_at_cap)
    )
    return hits / len(loop)


def acceptance_curve(records: Sequence[CellRecord], ks: Sequence[int]) -> dict[int, float]:
    return {k: acceptance_at_k(records, k) for k in ks}


def retry_stats(
    records: Sequence[CellRecord], redo_threshold: int = 5
) -> ReportTable:
    """Mean attempts per class and overall, plus redo>threshold counts.

    Single-pass cells report mean 1.00 by construction (reference-row
    convention); the redo counts consider loop cells only.
    """
    usable = [r for r in records if not r.failed]
    if not usable:
        raise MetricsError("retry_stats over empty input")
    table = ReportTable(
        group_by="class",
        columns=["mean_attempts", f"redo_gt{redo_threshold}"],
    )
    by_class: dict[str, list[CellRecord]] = {}
    for r in usable:
        by_class.setdefault(f"E{r.error_class}", []).append(r)
    by_class["all"] = usable
    for group in sorted(by_class):
        recs = by_class[group]
        attempts = [len(r.attempts) for r in recs]
        redo = sum(
            1 for r in recs if not r.single_pass and r.retries > redo_threshold
        )
        table.rows[group] = {
            "mean_attempts": sum(attempts) / len(attempts),
            f"redo_gt{redo_threshold}": float(redo),
        }
        table.counts[group] = len(recs)
    return table


def cost_report(records: Sequence[CellRecord], group_by: str = "all") -> ReportTable:
    """Median/p95/mean of per-cell token, dollar, and latency totals.

    Per-cell totals already sum drafting and judging usage over every
    attempt; classifier-judged cells carry drafting-side usage only.
    """
    usable = [r for r in records if not r.failed]
    if not usable:
        raise MetricsError("cost_report over empty input")
    key = _group_fn(group_by)
    columns = [
        "tokens_med", "tokens_p95", "tokens_mean",
        "usd_med", "usd_p95", "usd_mean",
        "latency_med", "latency_p95", "latency_mean",
    ]
    table = ReportTable(group_by=group_by, columns=columns)
    groups: dict[str, list[CellUsageTotal]] = {}
    for r in usable:
        groups.setdefault(key(r), []).append(r.usage_total)
    for group, totals in sorted(groups.items()):
        tokens = [float(t.tokens) for t in totals]
        usd = [t.usd for t in totals]
        latency = [t.latency_s for t in totals]
        table.rows[group] = {
            "tokens_med": nearest_rank(tokens, 50),
            "tokens_p95": nearest_rank(tokens, 95),
            "tokens_mean": sum(tokens) / len(tokens),
            "usd_med": nearest_rank(usd, 50),
            "usd_p95": nearest_rank(usd, 95),
            "usd_mean": sum(usd) / len(usd),
            "latency_med": nearest_rank(latency, 50),
            "latency_p95": nearest_rank(latency, 95),
            "latency_mean": sum(latency) / len(latency),
        }
        table.counts[group] = len(totals)
    return table


def subject_breakdown(
    records: Sequence[EffectiveRecord], subject_map: SubjectMap
) -> ReportTable:
    """Targeted-error rate re-bucketed by the subject of each question."""
    unmapped = []
    for eff in records:
        try:
            subject_map.bucket(eff.record.question_id)
        except KeyError:
            unmapped.append(eff.record.question_id)
    if unmapped:
        raise MetricsError(f"questions missing from subject map: {sorted(set(unmapped))}")
    unlabeled = [e.record.cell_id for e in records if e.human_examination is None]
    if unlabeled:
        raise UnlabeledCellError(unlabeled)
    table = ReportTable(group_by="subject", columns=["targeted_error_rate"])
    groups: dict[str, list[str]] = {}
    for eff in records:
        bucket = subject_map.bucket(eff.record.question_id) or "unbucketed"
        groups.setdefault(bucket, []).append(outcome_of(eff))
    for bucket, outcomes in sorted(groups.items()):
        hits = sum(1 for o in outcomes if o == OUTCOME_RIGHT_CLASS)
        table.rows[bucket] = {"targeted_error_rate": hits / len(outcomes)}
        table.counts[bucket] = len(outcomes)
    return table
