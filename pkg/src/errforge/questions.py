"""Question-pool ingestion with typed gold answers and subject buckets.

Pool files are JSONL, one record per question with stable field names
id, text, answer_type, gold_answer, subject. Gold answers are typed
(integer, float, list, bool); list answers are arrays of numbers.
The subject map is a separate sidecar file so re-bucketing never
mutates the pool. The framework never grades responses against gold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

ANSWER_TYPES = ("integer", "float", "list", "bool")


class PoolError(ValueError):
    """Malformed pool file; message carries the line/record locus."""


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    answer_type: str
    gold_answer: Any
    subject: str = ""

    def gold_literal(self) -> str:
        """Gold answer rendered as a stable literal for prompts/records."""
        return json.dumps(self.gold_answer)


def parse_gold(answer_type: str, raw: Any) -> Any:
    """Parse a raw gold value under its declared answer type."""
    if answer_type == "integer":
        if isinstance(raw, bool):
            raise ValueError(f"not an integer: {raw!r}")
        if isinstance(raw, int):
            return raw
        if isinstance(raw, str):
            return int(raw.strip())
        raise ValueError(f"not an integer: {raw!r}")
    if answer_type == "float":
        if isinstance(raw, bool):
            raise ValueError(f"not a float: {raw!r}")
        if isinstance(raw, (int, float)):
            return float(raw)
        if isinstance(raw, str):
            return float(raw.strip())
        raise ValueError(f"not a float: {raw!r}")
    if answer_type == "bool":
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.strip().lower() in ("true", "false"):
            return raw.strip().lower() == "true"
        raise ValueError(f"not a bool: {raw!r}")
    if answer_type == "list":
        if isinstance(raw, str):
            raw = json.loads(raw)
        if not isinstance(raw, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw
        ):
            raise ValueError(f"not a list of numbers: {raw!r}")
        return list(raw)
    raise ValueError(f"unknown answer_type: {answer_type!r}")


def _question_from_record(obj: dict, locus: str) -> Question:
    for name in ("id", "text", "answer_type", "gold_answer"):
        if name not in obj:
            raise PoolError(f"{locus}: missing field {name!r}")
    answer_type = obj["answer_type"]
    if answer_type not in ANSWER_TYPES:
        raise PoolError(f"{locus}: bad answer_type {answer_type!r}")
    try:
        gold = parse_gold(answer_type, obj["gold_answer"])
    except (ValueError, json.JSONDecodeError) as exc:
        raise PoolError(f"{locus}: gold_answer does not parse as {answer_type}: {exc}") from exc
    return Question(
        id=str(obj["id"]),
        text=str(obj["text"]),
        answer_type=answer_type,
        gold_answer=gold,
        subject=str(obj.get("subject", "")),
    )


def ingest(pool_file: str | Path) -> list[Question]:
    """Load and validate a pool file; duplicate ids are rejected."""
    questions: list[Question] = []
    seen: set[str] = set()
    with open(pool_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            locus = f"{pool_file}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PoolError(f"{locus}: invalid JSON: {exc}") from exc
            q = _question_from_record(obj, locus)
            if q.id in seen:
                raise PoolError(f"{locus}: duplicate question id {q.id!r}")
            seen.add(q.id)
            questions.append(q)
    return questions


def serialize(questions: list[Question], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(
                json.dumps(
                    {
                        "id": q.id,
                        "text": q.text,
                        "answer_type": q.answer_type,
                        "gold_answer": q.gold_answer,
                        "subject": q.subject,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def slice_pool(pool: list[Question], start: int, stop: int) -> list[Question]:
    """Contiguous sub-pool [start, stop), order preserved."""
    if start < 0 or stop > len(pool) or start > stop:
        raise PoolError(
            f"range {start}..{stop} out of bounds for pool of {len(pool)} questions"
        )
    return pool[start:stop]


class SubjectMap:
    """Question id -> bucket name; explicit null means unbucketed."""

    def __init__(self, mapping: dict[str, str | None]):
        self._mapping = dict(mapping)

    def bucket(self, question_id: str) -> str | None:
        if question_id not in self._mapping:
            raise KeyError(f"question {question_id!r} missing from subject map")
        return self._mapping[question_id]

    def buckets(self) -> list[str]:
        return sorted({b for b in self._mapping.values() if b is not None})

    @classmethod
    def load(cls, path: str | Path) -> "SubjectMap":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))
