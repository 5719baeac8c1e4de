"""Append-only run persistence, label events, and training-set export.

A run directory holds:
  manifest.json   - plan snapshot + config hash, written once
  records.jsonl   - one generation record per line, append-only
  labels.jsonl    - human label events, append-only, latest-wins

Generation lines are never mutated; labels are merged at read time.
The record line keeps the released-schema fields at the top level
(question and gold answer verbatim, class id + name, pipeline,
backend, final response, judge verdict, retries, human_examination,
is_refusal) and namespaces everything artifact-specific under "ext".
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backends import CallUsage, CellUsageTotal
from .examination import Judgment, encode_classifier_input
from .generation import Draft
from .taxonomy import class_of

RECORDS_FILE = "records.jsonl"
LABELS_FILE = "labels.jsonl"
MANIFEST_FILE = "manifest.json"

SUBLABELS = ("correct", "incorrect_wrong_class")


class StoreError(RuntimeError):
    pass


class CorruptLineError(StoreError):
    def __init__(self, path: Path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: corrupt record line: {reason}")
        self.lineno = lineno


class UnknownCellError(KeyError):
    pass


@dataclass
class Attempt:
    draft: Draft
    judgment: Judgment | None = None


@dataclass
class CellRecord:
    run_id: str
    cell_id: str
    question_id: str
    question: str
    answer_type: str
    gold_answer: object
    error_class: int
    pipeline: str
    backend_id: str
    attempts: list[Attempt]
    final_response: str
    ea_accepted: bool
    emitted_at_cap: bool
    single_pass: bool
    is_refusal: bool
    refusal_matches: tuple[str, ...]
    usage_total: CellUsageTotal
    started_at: float
    finished_at: float
    ea_backend_id: str | None = None
    failed: bool = False
    failure_reason: str | None = None

    @property
    def error_class_name(self) -> str:
        return class_of(self.error_class).name

    @property
    def retries(self) -> int:
        return len(self.attempts) - 1

    @property
    def last_judgment(self) -> Judgment | None:
        for attempt in reversed(self.attempts):
            if attempt.judgment is not None:
                return attempt.judgment
        return None


@dataclass
class LabelEvent:
    cell_id: str
    human_examination: int
    annotator: str
    sublabel: str | None = None        # meaningful when human_examination == 0
    refusal_override: bool | None = None
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.human_examination not in (0, 1):
            raise ValueError("human_examination must be 0 or 1")
        if self.sublabel is not None and self.sublabel not in SUBLABELS:
            raise ValueError(f"sublabel must be one of {SUBLABELS}")


@dataclass
class EffectiveRecord:
    """A generation record merged with its latest label event."""

    record: CellRecord
    label: LabelEvent | None = None
    label_history: list[LabelEvent] = field(default_factory=list)

    @property
    def human_examination(self) -> int | None:
        return self.label.human_examination if self.label else None

    @property
    def sublabel(self) -> str | None:
        return self.label.sublabel if self.label else None

    @property
    def is_refusal(self) -> bool:
        if self.label and self.label.refusal_override is not None:
            return self.label.refusal_override
        return self.record.is_refusal


# --- serialization ---------------------------------------------------------

def _usage_to_obj(u: CallUsage) -> dict:
    return {
        "input_tokens": u.input_tokens,
        "output_tokens": u.output_tokens,
        "reasoning_tokens": u.reasoning_tokens,
        "latency_s": u.latency_s,
    }


def _usage_from_obj(obj: dict) -> CallUsage:
    return CallUsage(**obj)


def _judgment_to_obj(j: Judgment | None) -> dict | None:
    if j is None:
        return None
    return {
        "is_incorrect": j.is_incorrect,
        "class_match": j.class_match,
        "accept": j.accept,
        "rationale": j.rationale,
        "raw": j.raw,
        "usage": _usage_to_obj(j.usage) if j.usage else None,
        "malformed": j.malformed,
    }


def _judgment_from_obj(obj: dict | None) -> Judgment | None:
    if obj is None:
        return None
    obj = dict(obj)
    usage = obj.pop("usage", None)
    return Judgment(usage=_usage_from_obj(usage) if usage else None, **obj)


def record_to_row(rec: CellRecord) -> dict:
    last = rec.last_judgment
    return {
        "cell_id": rec.cell_id,
        "run_id": rec.run_id,
        "question_id": rec.question_id,
        "question": rec.question,
        "answer_type": rec.answer_type,
        "gold_answer": rec.gold_answer,
        "error_class": rec.error_class,
        "error_class_name": rec.error_class_name,
        "pipeline": rec.pipeline,
        "backend": rec.backend_id,
        "response": rec.final_response,
        "ea_accepted": rec.ea_accepted,
        "ea_class_match": last.class_match if last else None,
        "retries": rec.retries,
        "human_examination": None,  # labels live in the sibling event file
        "is_refusal": rec.is_refusal,
        "ext": {
            "ea_backend": rec.ea_backend_id,
            "emitted_at_cap": rec.emitted_at_cap,
            "single_pass": rec.single_pass,
            "failed": rec.failed,
            "failure_reason": rec.failure_reason,
            "refusal_matches": list(rec.refusal_matches),
            "attempts": [
                {
                    "attempt_index": a.draft.attempt_index,
                    "text": a.draft.text,
                    "usage": _usage_to_obj(a.draft.usage),
                    "judgment": _judgment_to_obj(a.judgment),
                }
                for a in rec.attempts
            ],
            "usage_total": {
                "input_tokens": rec.usage_total.input_tokens,
                "output_tokens": rec.usage_total.output_tokens,
                "reasoning_tokens": rec.usage_total.reasoning_tokens,
                "usd": rec.usage_total.usd,
                "latency_s": rec.usage_total.latency_s,
            },
            "started_at": rec.started_at,
            "finished_at": rec.finished_at,
        },
    }


def record_from_row(row: dict) -> CellRecord:
    ext = row["ext"]
    attempts = [
        Attempt(
            draft=Draft(
                text=a["text"],
                attempt_index=a["attempt_index"],
                usage=_usage_from_obj(a["usage"]),
            ),
            judgment=_judgment_from_obj(a["judgment"]),
        )
        for a in ext["attempts"]
    ]
    return CellRecord(
        run_id=row["run_id"],
        cell_id=row["cell_id"],
        question_id=row["question_id"],
        question=row["question"],
        answer_type=row["answer_type"],
        gold_answer=row["gold_answer"],
        error_class=row["error_class"],
        pipeline=row["pipeline"],
        backend_id=row["backend"],
        attempts=attempts,
        final_response=row["response"],
        ea_accepted=row["ea_accepted"],
        emitted_at_cap=ext["emitted_at_cap"],
        single_pass=ext["single_pass"],
        is_refusal=row["is_refusal"],
        refusal_matches=tuple(ext["refusal_matches"]),
        usage_total=CellUsageTotal(**ext["usage_total"]),
        started_at=ext["started_at"],
        finished_at=ext["finished_at"],
        ea_backend_id=ext.get("ea_backend"),
        failed=ext.get("failed", False),
        failure_reason=ext.get("failure_reason"),
    )


def record_line(rec: CellRecord) -> str:
    return json.dumps(record_to_row(rec), ensure_ascii=False)


# --- run directory IO ------------------------------------------------------

_append_lock = threading.Lock()


def append_record(run_dir: str | Path, rec: CellRecord) -> None:
    path = Path(run_dir) / RECORDS_FILE
    with _append_lock:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(record_line(rec) + "\n")


def read_records(run_dir: str | Path, skip_corrupt: bool = False) -> list[CellRecord]:
    """Records in append order. Corrupt lines raise unless skipping."""
    path = Path(run_dir) / RECORDS_FILE
    records: list[CellRecord] = []
    if not path.exists():
        return records
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                if not line.endswith("\n"):
                    raise ValueError("truncated line (missing newline)")
                records.append(record_from_row(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                if skip_corrupt:
                    continue
                raise CorruptLineError(path, lineno, str(exc)) from exc
    return records


def append_label(run_dir: str | Path, event: LabelEvent) -> None:
    path = Path(run_dir) / LABELS_FILE
    with _append_lock:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "cell_id": event.cell_id,
                        "human_examination": event.human_examination,
                        "sublabel": event.sublabel,
                        "refusal_override": event.refusal_override,
                        "annotator": event.annotator,
                        "timestamp": event.timestamp,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_labels(run_dir: str | Path) -> list[LabelEvent]:
    path = Path(run_dir) / LABELS_FILE
    events: list[LabelEvent] = []
    if not path.exists():
        return events
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            events.append(
                LabelEvent(
                    cell_id=obj["cell_id"],
                    human_examination=obj["human_examination"],
                    annotator=obj["annotator"],
                    sublabel=obj.get("sublabel"),
                    refusal_override=obj.get("refusal_override"),
                    timestamp=obj.get("timestamp", 0.0),
                )
            )
    return events


def apply_label(run_dir: str | Path, event: LabelEvent) -> EffectiveRecord:
    """Record a label event; the generation line is never touched."""
    records = {r.cell_id: r for r in read_records(run_dir)}
    if event.cell_id not in records:
        raise UnknownCellError(event.cell_id)
    append_label(run_dir, event)
    history = [e for e in read_labels(run_dir) if e.cell_id == event.cell_id]
    return EffectiveRecord(
        record=records[event.cell_id], label=history[-1], label_history=history
    )


def effective_records(run_dir: str | Path) -> list[EffectiveRecord]:
    """All records with their latest labels merged, in append order."""
    by_cell: dict[str, list[LabelEvent]] = {}
    for event in read_labels(run_dir):
        by_cell.setdefault(event.cell_id, []).append(event)
    return [
        EffectiveRecord(
            record=rec,
            label=by_cell.get(rec.cell_id, [None])[-1],
            label_history=by_cell.get(rec.cell_id, []),
        )
        for rec in read_records(run_dir)
    ]


# --- training-set export ---------------------------------------------------

@dataclass(frozen=True)
class TrainingExample:
    input: str
    label: int


def training_example(eff: EffectiveRecord) -> TrainingExample:
    if eff.human_examination is None:
        raise StoreError(f"cell {eff.record.cell_id} is unlabeled; cannot export")
    return TrainingExample(
        input=encode_classifier_input(
            eff.record.question, eff.record.final_response, eff.record.error_class
        ),
        label=eff.human_examination,
    )


def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three values summing to 1")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return n_train, n_val, n - n_train - n_val


def export_training_set(
    labeled: Iterable[EffectiveRecord],
    fractions: Sequence[float],
    seed: int,
    out_dir: str | Path,
) -> dict:
    """Seeded deterministic split into train/val/test JSONL files.

    Returns a summary with split sizes and per-class counts per split.
    """
    records = list(labeled)
    examples = [(eff.record.error_class, training_example(eff)) for eff in records]
    rng = random.Random(seed)
    rng.shuffle(examples)
    n_train, n_val, n_test = split_sizes(len(examples), fractions)
    splits = {
        "train": examples[:n_train],
        "val": examples[n_train : n_train + n_val],
        "test": examples[n_train + n_val :],
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"sizes": {}, "class_balance": {}}
    for name, items in splits.items():
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for _, ex in items:
                fh.write(json.dumps({"input": ex.input, "label": ex.label}, ensure_ascii=False) + "\n")
        summary["sizes"][name] = len(items)
        balance: dict[str, int] = {}
        for cls, _ in items:
            balance[str(cls)] = balance.get(str(cls), 0) + 1
        summary["class_balance"][name] = balance
    with open(out / "balance_report.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary
