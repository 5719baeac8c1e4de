"""The P0-P8 pipeline configuration matrix and run-plan validation.

Each pipeline toggles three axes: what the drafting agent sees (gold
answer, latest rejected draft, which exemplar set), what kind of judge
filters its output (none, prompted LLM, external classifier), and
whether the judge gets textbook excerpts. The nine canonical configs
are data, not code paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

from .taxonomy import VALID_CLASS_IDS

PIPELINE_IDS = tuple(f"P{i}" for i in range(9))

EA_KINDS = ("none", "prompted", "classifier")
EXEMPLAR_SET_CHOICES = ("base", "expanded", "hybrid_mix")

DEFAULT_RETRY_CAP = 5


class PipelineError(ValueError):
    """Unknown pipeline id or inconsistent configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    id: str
    ga_sees_gold_answer: bool
    ga_sees_latest_failure: bool
    ga_exemplar_set: str
    ea_kind: str
    ea_has_textbook: bool
    retry_cap: int | None = DEFAULT_RETRY_CAP  # None = unlimited

    def violations(self) -> list[str]:
        out = []
        if self.ga_exemplar_set not in EXEMPLAR_SET_CHOICES:
            out.append(f"ga_exemplar_set: unknown set {self.ga_exemplar_set!r}")
        if self.ea_kind not in EA_KINDS:
            out.append(f"ea_kind: unknown kind {self.ea_kind!r}")
        if self.ea_kind == "none" and self.ga_sees_latest_failure:
            out.append("ga_sees_latest_failure: feedback requires an EA")
        if self.ea_kind == "classifier" and self.ea_has_textbook:
            out.append("ea_has_textbook: the classifier EA takes no textbook context")
        if self.retry_cap is not None and self.retry_cap < 1:
            out.append("retry_cap: must be a positive count or unlimited")
        return out

    @property
    def single_pass(self) -> bool:
        return self.ea_kind == "none"


def _cfg(pid, gold, failure, exemplars, ea, textbook) -> PipelineConfig:
    return PipelineConfig(
        id=pid,
        ga_sees_gold_answer=gold,
        ga_sees_latest_failure=failure,
        ga_exemplar_set=exemplars,
        ea_kind=ea,
        ea_has_textbook=textbook,
    )


_MATRIX = {
    "P0": _cfg("P0", False, False, "base", "none", False),
    "P1": _cfg("P1", True, False, "base", "prompted", False),
    "P2": _cfg("P2", True, False, "base", "none", False),
    "P3": _cfg("P3", True, True, "base", "prompted", False),
    "P4": _cfg("P4", True, True, "base", "prompted", True),
    "P5": _cfg("P5", True, True, "hybrid_mix", "prompted", True),
    "P6": _cfg("P6", True, True, "expanded", "prompted", False),
    "P7": _cfg("P7", True, True, "expanded", "prompted", True),
    "P8": _cfg("P8", True, False, "base", "classifier", False),
}


def config_for(pipeline_id: str, retry_cap: int | None = DEFAULT_RETRY_CAP) -> PipelineConfig:
    """Canonical matrix row for one of P0..P8."""
    try:
        base = _MATRIX[pipeline_id]
    except KeyError:
        raise PipelineError(f"unknown pipeline id {pipeline_id!r}") from None
    if retry_cap == DEFAULT_RETRY_CAP:
        return base
    return PipelineConfig(**{**asdict(base), "retry_cap": retry_cap})


@dataclass
class RunPlan:
    """Everything needed to execute one batch run."""

    pipeline: PipelineConfig
    backend_id: str
    classes: tuple[int, ...]
    pool_file: str
    out_dir: str
    question_range: tuple[int, int] | None = None  # (start, stop), None = whole pool
    parallelism: int = 1
    ea_backend_id: str | None = None       # prompted EA backend; defaults to backend_id
    mix_map: dict[int, str] | None = None  # required for hybrid_mix pipelines
    context_docs: tuple[str, ...] = ()     # textbook excerpts for the EA
    judge_endpoint: str | None = None      # classifier judge protocol URL
    judge_threshold: float = 0.5
    run_id: str = "run"

    def violations(self) -> list[str]:
        out = list(self.pipeline.violations())
        bad = [c for c in self.classes if c not in VALID_CLASS_IDS]
        if bad:
            out.append(f"classes: invalid class ids {bad}")
        if not self.classes:
            out.append("classes: at least one target class required")
        if self.parallelism < 1:
            out.append("parallelism: must be >= 1")
        if self.pipeline.ga_exemplar_set == "hybrid_mix":
            covered = set(self.mix_map or {})
            missing = [c for c in self.classes if c not in covered]
            if missing:
                out.append(f"mix_map: hybrid_mix pipeline lacks entries for classes {missing}")
        if self.pipeline.ea_kind == "classifier" and not self.judge_endpoint:
            out.append("judge_endpoint: classifier EA requires a judge endpoint")
        if self.question_range is not None:
            start, stop = self.question_range
            if start < 0 or stop < start:
                out.append(f"question_range: bad range {start}..{stop}")
        return out

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["pipeline"] = asdict(self.pipeline)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "RunPlan":
        obj = dict(obj)
        pipe = obj.pop("pipeline")
        if isinstance(pipe, str):
            pipeline = config_for(pipe)
        else:
            pipeline = PipelineConfig(**pipe)
        if obj.get("classes") is not None:
            obj["classes"] = tuple(obj["classes"])
        if obj.get("question_range") is not None:
            obj["question_range"] = tuple(obj["question_range"])
        if obj.get("context_docs") is not None:
            obj["context_docs"] = tuple(obj["context_docs"])
        if obj.get("mix_map") is not None:
            obj["mix_map"] = {int(k): v for k, v in obj["mix_map"].items()}
        return cls(pipeline=pipeline, **obj)

    @classmethod
    def load(cls, path: str | Path) -> "RunPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def validate(plan: RunPlan) -> list[str]:
    """All invariant violations, each naming the offending field."""
    return plan.violations()
