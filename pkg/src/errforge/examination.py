"""Judging of (question, target class, response) triples.

Two judge kinds behind one interface: a prompted LLM judge that
answers two labeled binary verdicts, and an external classifier
reached over a small local judge protocol. The judge prompt carries
the class definitions only, never the drafting agent's exemplars;
that asymmetry keeps the judge from pattern-matching the drafter's
prompt surface.
"""

from __future__ import annotations

import re
import threading
import uuid
from dataclasses import dataclass
from typing import Protocol

import httpx

from . import taxonomy
from .backends import Backend, CallUsage, CompletionRequest
from .questions import Question


class MalformedVerdictError(ValueError):
    """Prompted judge output did not contain the two binary verdicts."""


class JudgeProtocolError(RuntimeError):
    """Classifier endpoint unreachable or returned a malformed message."""


@dataclass(frozen=True)
class Judgment:
    is_incorrect: bool
    class_match: bool
    accept: bool
    rationale: str = ""
    raw: str = ""
    usage: CallUsage | None = None
    malformed: bool = False

    def __post_init__(self) -> None:
        if self.accept != (self.is_incorrect and self.class_match):
            raise ValueError("accept must equal is_incorrect AND class_match")


class Judge(Protocol):
    def judge(self, question: Question, target: int, response_text: str) -> Judgment: ...


_VERDICT_FORMAT = (
    "Answer with exactly two lines, nothing else:\n"
    "incorrect: yes|no\n"
    "class match: yes|no"
)

_INCORRECT_RX = re.compile(r"^\s*incorrect\s*:\s*(yes|no)\b", re.IGNORECASE | re.MULTILINE)
_MATCH_RX = re.compile(r"^\s*class\s*match\s*:\s*(yes|no)\b", re.IGNORECASE | re.MULTILINE)


def assemble_ea_prompt(
    question: Question,
    target: int,
    response_text: str,
    backend_id: str,
    context_docs: tuple[str, ...] = (),
) -> CompletionRequest:
    """Judge prompt: class definitions, triple to judge, output format.

    Contains no few-shot exemplar text by construction.
    """
    taxonomy.ensure_class_id(target)
    lines = [
        "You are judging whether a student response is a targeted error."
        " The error classes are:",
    ]
    for cls in taxonomy.all_classes():
        lines.append(f"{cls.id}. {cls.prompt_definition}")
    system = "\n".join(lines)

    blocks = [
        f"Question:\n{question.text}",
        f"Candidate response:\n{response_text}",
        f"Target error class: {target} ({taxonomy.class_of(target).name})",
    ]
    for doc in context_docs:
        blocks.append(f"Reference material:\n{doc}")
    blocks.append(
        "Judge two things: (a) whether the response's final answer is"
        " incorrect; (b) whether the reasoning matches the target class"
        " definition.\n" + _VERDICT_FORMAT
    )
    return CompletionRequest(
        system_prompt=system,
        user_messages=("\n\n".join(blocks),),
        backend_id=backend_id,
    )


def parse_verdict(text: str) -> tuple[bool, bool]:
    m_inc = _INCORRECT_RX.search(text)
    m_cls = _MATCH_RX.search(text)
    if m_inc is None or m_cls is None:
        raise MalformedVerdictError(f"cannot parse verdict from: {text[:200]!r}")
    return m_inc.group(1).lower() == "yes", m_cls.group(1).lower() == "yes"


class PromptedJudge:
    """LLM judge. One re-ask on a malformed verdict (not a loop attempt);
    a second failure is recorded as a malformed rejection."""

    def __init__(self, backend: Backend, context_docs: tuple[str, ...] = ()):
        self.backend = backend
        self.context_docs = tuple(context_docs)
        self.uses_api_tokens = True

    def judge(self, question: Question, target: int, response_text: str) -> Judgment:
        req = assemble_ea_prompt(
            question, target, response_text, self.backend.backend_id, self.context_docs
        )
        usage_total: CallUsage | None = None
        raw = ""
        for _ in range(2):
            result = self.backend.complete(req)
            raw = result.text
            usage_total = (
                result.usage
                if usage_total is None
                else CallUsage(
                    input_tokens=usage_total.input_tokens + result.usage.input_tokens,
                    output_tokens=usage_total.output_tokens + result.usage.output_tokens,
                    reasoning_tokens=usage_total.reasoning_tokens + result.usage.reasoning_tokens,
                    latency_s=usage_total.latency_s + result.usage.latency_s,
                )
            )
            try:
                is_incorrect, class_match = parse_verdict(raw)
            except MalformedVerdictError:
                continue
            return Judgment(
                is_incorrect=is_incorrect,
                class_match=class_match,
                accept=is_incorrect and class_match,
                rationale=raw,
                raw=raw,
                usage=usage_total,
            )
        # Two unparseable replies: conservative rejection, flagged.
        return Judgment(
            is_incorrect=False,
            class_match=False,
            accept=False,
            rationale="",
            raw=raw,
            usage=usage_total,
            malformed=True,
        )


def encode_classifier_input(question: Question | str, response_text: str, target: int) -> str:
    """Exact classifier input template; `target` is the numeric class id."""
    taxonomy.ensure_class_id(target)
    q_text = question.text if isinstance(question, Question) else question
    return f"Question: {q_text} Answer: {response_text} Error Class: {target}"


class ClassifierJudge:
    """External classifier reached over the local judge protocol.

    Protocol: GET {endpoint}/handshake -> {name, version, concurrent};
    POST {endpoint}/judge with {id, question, answer, error_class} ->
    {id, accept, score}. Accept is derived from score >= threshold so
    deployers can recalibrate without retraining. Judgments carry no
    API usage: the classifier contributes zero API tokens.
    """

    def __init__(
        self,
        endpoint: str,
        threshold: float = 0.5,
        client: httpx.Client | None = None,
        timeout_s: float = 30.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.threshold = threshold
        self.uses_api_tokens = False
        self._client = client or httpx.Client(timeout=timeout_s)
        self._lock = threading.Lock()
        self._concurrent_safe: bool | None = None

    def handshake(self) -> dict:
        try:
            resp = self._client.get(f"{self.endpoint}/handshake")
            resp.raise_for_status()
            obj = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise JudgeProtocolError(f"handshake failed: {exc}") from exc
        for key in ("name", "version", "concurrent"):
            if key not in obj:
                raise JudgeProtocolError(f"handshake missing field {key!r}")
        self._concurrent_safe = bool(obj["concurrent"])
        return obj

    def judge(self, question: Question, target: int, response_text: str) -> Judgment:
        if self._concurrent_safe is None:
            self.handshake()
        request_id = uuid.uuid4().hex
        payload = {
            "id": request_id,
            "question": question.text,
            "answer": response_text,
            "error_class": target,
            "input": encode_classifier_input(question, response_text, target),
        }
        if self._concurrent_safe:
            obj = self._post_judge(payload)
        else:
            with self._lock:
                obj = self._post_judge(payload)
        if obj.get("id") != request_id:
            raise JudgeProtocolError("judge response id does not echo the request id")
        try:
            score = float(obj["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise JudgeProtocolError(f"malformed judge response: {obj!r}") from exc
        if not 0.0 <= score <= 1.0:
            raise JudgeProtocolError(f"score out of [0,1]: {score}")
        accept = score >= self.threshold
        return Judgment(
            is_incorrect=accept,
            class_match=accept,
            accept=accept,
            rationale="",
            raw=f"score={score}",
            usage=None,
        )

    def _post_judge(self, payload: dict) -> dict:
        try:
            resp = self._client.post(f"{self.endpoint}/judge", json=payload)
            resp.raise_for_status()
            return resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise JudgeProtocolError(f"judge call failed: {exc}") from exc


def judge_prompted(
    question: Question,
    target: int,
    response_text: str,
    backend: Backend,
    context_docs: tuple[str, ...] = (),
) -> Judgment:
    return PromptedJudge(backend, context_docs).judge(question, target, response_text)


def judge_classifier(
    question: Question,
    target: int,
    response_text: str,
    judge_endpoint: str,
    threshold: float = 0.5,
) -> Judgment:
    return ClassifierJudge(judge_endpoint, threshold).judge(question, target, response_text)
