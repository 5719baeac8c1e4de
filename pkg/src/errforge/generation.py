"""Prompt assembly and drafting for the generation agent.

One multi-class agent: the system prompt always carries all five
class definitions so the model can distinguish its target from
adjacent failure modes. The user message stacks blocks in a fixed,
documented order (exemplars, instruction, question, gold answer,
latest failure, context docs) so prompt diffs stay reviewable.
Identical inputs yield byte-identical prompts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from . import taxonomy
from .backends import Backend, CallUsage, CompletionRequest, CompletionResult
from .pipelines import PipelineConfig
from .questions import Question
from .taxonomy import Exemplar, ExemplarStore


class GroundingError(ValueError):
    """Grounding bundle inconsistent with the pipeline's gating rules."""


@dataclass(frozen=True)
class LatestFailure:
    draft: str
    ea_rationale: str


@dataclass(frozen=True)
class GroundingBundle:
    exemplars: tuple[Exemplar, ...]
    gold_answer: str | None = None          # rendered typed literal
    gold_answer_type: str | None = None
    latest_failure: LatestFailure | None = None
    context_docs: tuple[str, ...] = ()


@dataclass(frozen=True)
class Draft:
    text: str
    attempt_index: int
    usage: CallUsage


def build_grounding(
    question: Question,
    target: int,
    cfg: PipelineConfig,
    store: ExemplarStore,
    attempt_index: int,
    latest_failure: LatestFailure | None = None,
    mix_map: Mapping[int, str] | None = None,
    ga_context_docs: tuple[str, ...] = (),
) -> GroundingBundle:
    """Assemble the per-attempt grounding, enforcing pipeline gating.

    ``ga_context_docs`` is an optional hook for textbook text on the
    drafting side; it stays empty unless explicitly enabled.
    """
    if attempt_index < 1:
        raise GroundingError("attempt_index starts at 1")
    if latest_failure is not None and (not cfg.ga_sees_latest_failure or attempt_index < 2):
        raise GroundingError(
            "latest_failure is only allowed on attempt >= 2 of feedback pipelines"
        )
    exemplars = tuple(store.exemplars_for(target, cfg.ga_exemplar_set, mix_map))
    return GroundingBundle(
        exemplars=exemplars,
        gold_answer=question.gold_literal() if cfg.ga_sees_gold_answer else None,
        gold_answer_type=question.answer_type if cfg.ga_sees_gold_answer else None,
        latest_failure=latest_failure,
        context_docs=ga_context_docs,
    )


def system_prompt() -> str:
    lines = [
        "You are simulating a student solving a problem while making a"
        " specific type of mistake. The error classes are:",
    ]
    for cls in taxonomy.all_classes():
        lines.append(f"{cls.id}. {cls.prompt_definition}")
    return "\n".join(lines)


def assemble_ga_prompt(
    question: Question,
    target: int,
    grounding: GroundingBundle,
    backend_id: str,
) -> CompletionRequest:
    """Render the drafting prompt for one (question, class) attempt."""
    taxonomy.ensure_class_id(target)
    for ex in grounding.exemplars:
        if ex.class_id != target:
            raise GroundingError(
                f"exemplar of class {ex.class_id} in a class-{target} prompt"
            )

    blocks: list[str] = []
    for ex in grounding.exemplars:
        blocks.append(f"Q: {ex.question}\nA: {ex.erroneous_answer}\nE: {ex.explanation}")
    blocks.append(f"Generate an answer of error type {target} to the following question.")
    blocks.append(question.text)
    if grounding.gold_answer is not None:
        blocks.append(
            f"Correct answer ({grounding.gold_answer_type}): {grounding.gold_answer}"
        )
    if grounding.latest_failure is not None:
        blocks.append(
            "Your previous attempt was rejected.\n"
            f"Previous attempt:\n{grounding.latest_failure.draft}\n"
            f"Reviewer rationale:\n{grounding.latest_failure.ea_rationale}"
        )
    for doc in grounding.context_docs:
        blocks.append(f"Reference material:\n{doc}")

    return CompletionRequest(
        system_prompt=system_prompt(),
        user_messages=("\n\n".join(blocks),),
        backend_id=backend_id,
    )


def draft(
    question: Question,
    target: int,
    grounding: GroundingBundle,
    backend: Backend,
    attempt_index: int,
) -> Draft:
    """One drafting call. Never inspects or grades the returned text."""
    req = assemble_ga_prompt(question, target, grounding, backend.backend_id)
    result: CompletionResult = backend.complete(req)
    return Draft(text=result.text, attempt_index=attempt_index, usage=result.usage)
