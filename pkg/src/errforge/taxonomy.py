"""Five-class student error taxonomy and the few-shot exemplar store.

The taxonomy is fixed: five classes (1-5), each with a short catalog
definition used in reports and a longer phrasing used inside agent
prompts. Exemplars are (question, erroneous answer, explanation)
triples tagged by class and by exemplar set ("base" or "expanded").
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

VALID_CLASS_IDS = (1, 2, 3, 4, 5)

EXEMPLAR_SETS = ("base", "expanded")


class TaxonomyError(ValueError):
    """Invalid class id, exemplar set, or malformed exemplar data."""


class ExemplarLookupError(TaxonomyError):
    """No exemplar available for the requested (class, set)."""


@dataclass(frozen=True)
class ErrorClass:
    id: int
    name: str
    definition: str        # short catalog text, used in reports
    prompt_definition: str  # longer phrasing, used verbatim in agent prompts


_CLASSES = {
    1: ErrorClass(
        1,
        "Mental typo / sloppy work",
        "Arithmetic or transcription slip in an otherwise correct trajectory.",
        "**Mental Typo**: This error happens when a student is sloppy.",
    ),
    2: ErrorClass(
        2,
        "Knowledge gap",
        "Missing definition, term, or formula.",
        "**Knowledge Gap**: The student lacks a definition or formula.",
    ),
    3: ErrorClass(
        3,
        "Misconception",
        "Faulty mental model fitted to prior experience, or absent concept.",
        "**Misconception**: A faulty mental model fitted to prior experience.",
    ),
    4: ErrorClass(
        4,
        "Wrong choice",
        "Wrong problem classification or wrong solution procedure selected.",
        "**Wrong Choice**: Selection of the wrong solution procedure.",
    ),
    5: ErrorClass(
        5,
        "Structural blindness",
        "Failure to distinguish components and their interaction in the given setting.",
        "**Structural Blindness**: Failure to model component interaction.",
    ),
}


def ensure_class_id(value: int) -> int:
    """Validate and return an error-class id."""
    if value not in VALID_CLASS_IDS:
        raise TaxonomyError(f"invalid error class id: {value!r} (valid: 1-5)")
    return value


def class_of(class_id: int) -> ErrorClass:
    """Return the canonical class record for a valid id."""
    return _CLASSES[ensure_class_id(class_id)]


def all_classes() -> list[ErrorClass]:
    return [_CLASSES[c] for c in VALID_CLASS_IDS]


@dataclass(frozen=True)
class Exemplar:
    question: str
    erroneous_answer: str
    explanation: str
    class_id: int
    set_tag: str = "base"

    def __post_init__(self) -> None:
        ensure_class_id(self.class_id)
        if self.set_tag not in EXEMPLAR_SETS:
            raise TaxonomyError(f"invalid set_tag: {self.set_tag!r}")
        for name in ("question", "erroneous_answer", "explanation"):
            if not getattr(self, name).strip():
                raise TaxonomyError(f"exemplar field {name!r} must be non-empty")


@dataclass
class ExemplarStore:
    """Per-class index over the exemplar list, immutable after load."""

    exemplars: list[Exemplar]
    _index: dict[tuple[int, str], list[Exemplar]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        index: dict[tuple[int, str], list[Exemplar]] = {}
        for ex in self.exemplars:
            index.setdefault((ex.class_id, ex.set_tag), []).append(ex)
        self._index = index
        missing = [c for c in VALID_CLASS_IDS if not index.get((c, "base"))]
        if missing:
            raise TaxonomyError(f"classes without a base exemplar: {missing}")

    def exemplars_for(
        self,
        class_id: int,
        set_name: str = "base",
        mix_map: Mapping[int, str] | None = None,
    ) -> list[Exemplar]:
        """Exemplars of one class from one set.

        ``hybrid_mix`` resolves the effective set for the class through
        ``mix_map``. Requesting ``expanded`` where no expanded exemplars
        exist falls back to the base set with a warning.
        """
        ensure_class_id(class_id)
        if set_name == "hybrid_mix":
            if mix_map is None or class_id not in mix_map:
                raise ExemplarLookupError(
                    f"hybrid_mix requires a mix_map entry for class {class_id}"
                )
            set_name = mix_map[class_id]
        if set_name not in EXEMPLAR_SETS:
            raise TaxonomyError(f"invalid exemplar set: {set_name!r}")
        found = self._index.get((class_id, set_name), [])
        if not found and set_name == "expanded":
            logger.warning(
                "no expanded exemplars for class %d; falling back to base set",
                class_id,
            )
            found = self._index.get((class_id, "base"), [])
        if not found:
            raise ExemplarLookupError(
                f"no exemplars for class {class_id} in set {set_name!r}"
            )
        return list(found)

    def all_texts(self) -> list[str]:
        """Every exemplar text field, for prompt-asymmetry checks."""
        out: list[str] = []
        for ex in self.exemplars:
            out.extend((ex.question, ex.erroneous_answer, ex.explanation))
        return out

    @classmethod
    def load(cls, path: str | Path) -> "ExemplarStore":
        return cls(list(_read_exemplar_file(Path(path))))

    @classmethod
    def default(cls) -> "ExemplarStore":
        """Store seeded with the exemplars shipped in the package data."""
        data = resources.files("errforge.data").joinpath("exemplars.jsonl")
        with resources.as_file(data) as path:
            return cls.load(path)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ex in self.exemplars:
                fh.write(
                    json.dumps(
                        {
                            "class_id": ex.class_id,
                            "set_tag": ex.set_tag,
                            "question": ex.question,
                            "erroneous_answer": ex.erroneous_answer,
                            "explanation": ex.explanation,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


def _read_exemplar_file(path: Path) -> Iterable[Exemplar]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield Exemplar(
                    question=obj["question"],
                    erroneous_answer=obj["erroneous_answer"],
                    explanation=obj["explanation"],
                    class_id=int(obj["class_id"]),
                    set_tag=obj.get("set_tag", "base"),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise TaxonomyError(f"{path}:{lineno}: bad exemplar record: {exc}") from exc
