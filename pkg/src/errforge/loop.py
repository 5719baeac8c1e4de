"""The draft/judge retry loop, batch runner, resume, and cascade re-judge.

A cell is one (question, target class) unit. Single-pass pipelines
(no judge) do exactly one draft; looped pipelines draft and judge up
to the retry cap and always emit the final draft, recording honestly
whether the judge ever accepted it (emitted-at-cap semantics). Cells
are independent; execution order is question-major, class-minor, and
records are persisted in that order even when cells run in parallel,
so scripted runs are byte-reproducible and resumable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import generation, store
from .backends import (
    AuthError,
    Backend,
    BackendError,
    LedgerEntry,
    PricingTable,
    ScriptError,
    UsageLedger,
    cost_of,
)
from .examination import Judge, JudgeProtocolError, Judgment
from .generation import GroundingBundle, LatestFailure
from .pipelines import PipelineConfig, RunPlan, validate
from .questions import Question, ingest, slice_pool
from .refusal import RefusalRuleSet, default_rules
from .store import Attempt, CellRecord, MANIFEST_FILE
from .taxonomy import ExemplarStore

logger = logging.getLogger(__name__)

FATAL_ERRORS = (AuthError, ScriptError, JudgeProtocolError)


class RunError(RuntimeError):
    pass


class ManifestMismatchError(RunError):
    """Run directory belongs to a different plan/config; refusing to resume."""


@dataclass(frozen=True)
class CascadeReport:
    n_rejudged: int
    n_agree: int
    n_skipped: int
    retention: float
    compound_estimate: float | None = None


def cell_id_for(question_id: str, class_id: int) -> str:
    return f"{question_id}:c{class_id}"


def plan_cells(plan: RunPlan, pool: Sequence[Question]) -> list[tuple[Question, int]]:
    """Deterministic cell order: question-major, class-minor."""
    return [(q, c) for q in pool for c in sorted(plan.classes)]


def config_hash(plan: RunPlan) -> str:
    obj = plan.to_json()
    obj.pop("out_dir", None)       # relocation must not block resume
    obj.pop("parallelism", None)   # execution width is not part of the plan identity
    canonical = json.dumps(obj, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class LoopEngine:
    """Executes a RunPlan cell by cell against a backend and a judge."""

    def __init__(
        self,
        plan: RunPlan,
        ga_backend: Backend,
        judge: Judge | None,
        exemplar_store: ExemplarStore | None = None,
        pricing: PricingTable | None = None,
        rules: RefusalRuleSet | None = None,
        clock: Callable[[], float] = time.time,
        in_loop_refusal_rejection: bool = False,
    ):
        violations = validate(plan)
        if violations:
            raise RunError("invalid plan: " + "; ".join(violations))
        if plan.pipeline.ea_kind != "none" and judge is None:
            raise RunError(f"pipeline {plan.pipeline.id} requires a judge")
        self.plan = plan
        self.cfg: PipelineConfig = plan.pipeline
        self.ga_backend = ga_backend
        self.judge = judge
        self.store = exemplar_store or ExemplarStore.default()
        self.pricing = pricing or PricingTable.default()
        self.rules = rules or default_rules()
        self.clock = clock
        self.in_loop_refusal_rejection = in_loop_refusal_rejection
        self.ledger = UsageLedger()

    # -- single cell --------------------------------------------------------

    def run_cell(self, question: Question, target: int) -> CellRecord:
        cell_id = cell_id_for(question.id, target)
        started = self.clock()
        attempts: list[Attempt] = []
        accepted = False
        emitted_at_cap = False
        failed = False
        failure_reason: str | None = None
        cap = self.cfg.retry_cap
        last_failure: LatestFailure | None = None

        try:
            attempt_index = 0
            while True:
                attempt_index += 1
                grounding = generation.build_grounding(
                    question,
                    target,
                    self.cfg,
                    self.store,
                    attempt_index,
                    latest_failure=last_failure,
                    mix_map=self.plan.mix_map,
                )
                draft = generation.draft(
                    question, target, grounding, self.ga_backend, attempt_index
                )
                self._ledger(cell_id, "ga", self.ga_backend.backend_id, draft.usage)

                if self.cfg.single_pass:
                    # No judge: accepted by construction, judgment absent.
                    attempts.append(Attempt(draft=draft, judgment=None))
                    accepted = True
                    break

                judgment = self.judge.judge(question, target, draft.text)
                if judgment.usage is not None:
                    ea_backend = self.plan.ea_backend_id or getattr(
                        self.judge, "backend", self.ga_backend
                    ).backend_id
                    self._ledger(cell_id, "ea", ea_backend, judgment.usage)
                attempts.append(Attempt(draft=draft, judgment=judgment))

                accept = judgment.accept
                if accept and self.in_loop_refusal_rejection:
                    # Optional strict mode: detector hits count as rejections.
                    if self.rules.is_refusal(draft.text).flag:
                        accept = False
                if accept:
                    accepted = True
                    break
                if cap is not None and attempt_index >= cap:
                    emitted_at_cap = True
                    break
                last_failure = (
                    LatestFailure(draft=draft.text, ea_rationale=judgment.rationale)
                    if self.cfg.ga_sees_latest_failure
                    else None
                )
        except FATAL_ERRORS as exc:
            failed = True
            failure_reason = f"{type(exc).__name__}: {exc}"
            logger.error("cell %s failed: %s", cell_id, failure_reason)
        except BackendError as exc:
            failed = True
            failure_reason = f"{type(exc).__name__}: {exc}"
            logger.error("cell %s failed: %s", cell_id, failure_reason)

        if not attempts and not failed:
            raise RunError(f"cell {cell_id} produced no attempts")

        final_response = attempts[-1].draft.text if attempts else ""
        # Refusal detection runs at finalization only, on the final text.
        match = self.rules.is_refusal(final_response) if final_response else None
        return CellRecord(
            run_id=self.plan.run_id,
            cell_id=cell_id,
            question_id=question.id,
            question=question.text,
            answer_type=question.answer_type,
            gold_answer=question.gold_answer,
            error_class=target,
            pipeline=self.cfg.id,
            backend_id=self.ga_backend.backend_id,
            attempts=attempts,
            final_response=final_response,
            ea_accepted=accepted,
            emitted_at_cap=emitted_at_cap,
            single_pass=self.cfg.single_pass,
            is_refusal=bool(match.flag) if match else False,
            refusal_matches=match.matches if match else (),
            usage_total=self.ledger.cell_total(cell_id),
            started_at=started,
            finished_at=self.clock(),
            ea_backend_id=self.plan.ea_backend_id,
            failed=failed,
            failure_reason=failure_reason,
        )

    def _ledger(self, cell_id: str, agent: str, backend_id: str, usage) -> None:
        self.ledger.record(
            LedgerEntry(
                cell_id=cell_id,
                agent=agent,
                backend_id=backend_id,
                usage=usage,
                usd=cost_of(usage, backend_id, self.pricing),
            )
        )

    # -- batch --------------------------------------------------------------

    def _load_pool(self) -> list[Question]:
        pool = ingest(self.plan.pool_file)
        if self.plan.question_range is not None:
            start, stop = self.plan.question_range
            pool = slice_pool(pool, start, stop)
        return pool

    def _ensure_manifest(self, out_dir: Path) -> None:
        manifest_path = out_dir / MANIFEST_FILE
        expected = config_hash(self.plan)
        if manifest_path.exists():
            with open(manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            if manifest.get("config_hash") != expected:
                raise ManifestMismatchError(
                    f"run dir {out_dir} was created from a different plan "
                    f"(hash {manifest.get('config_hash')!r} != {expected!r})"
                )
            return
        manifest = {
            "run_id": self.plan.run_id,
            "config_hash": expected,
            "plan": self.plan.to_json(),
            "created_at": self.clock(),
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)

    def remaining_cells(self) -> list[tuple[Question, int]]:
        """Cells without a persisted record, in plan order."""
        out_dir = Path(self.plan.out_dir)
        pool = self._load_pool()
        cells = plan_cells(self.plan, pool)
        done = {
            r.cell_id
            for r in store.read_records(out_dir, skip_corrupt=False)
        }
        return [(q, c) for q, c in cells if cell_id_for(q.id, c) not in done]

    def run(self, max_cells: int | None = None) -> list[CellRecord]:
        """Execute all unfinished cells; records persist incrementally.

        ``max_cells`` bounds this invocation (smoke runs, interruption
        tests); the run stays resumable. Records are appended in plan
        order regardless of parallel completion order.
        """
        out_dir = Path(self.plan.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self._ensure_manifest(out_dir)
        todo = self.remaining_cells()
        if max_cells is not None:
            todo = todo[:max_cells]
        results: list[CellRecord] = []
        if not todo:
            return results
        if self.plan.parallelism <= 1:
            for question, target in todo:
                rec = self.run_cell(question, target)
                store.append_record(out_dir, rec)
                results.append(rec)
            return results
        with ThreadPoolExecutor(max_workers=self.plan.parallelism) as pool:
            futures = [pool.submit(self.run_cell, q, c) for q, c in todo]
            for future in futures:  # in-order persist keeps the file deterministic
                rec = future.result()
                store.append_record(out_dir, rec)
                results.append(rec)
        return results

    def resume(self, max_cells: int | None = None) -> list[CellRecord]:
        """Alias of run(): verifies the manifest and appends missing cells."""
        out_dir = Path(self.plan.out_dir)
        if not (out_dir / MANIFEST_FILE).exists():
            raise RunError(f"no manifest in {out_dir}; nothing to resume")
        return self.run(max_cells=max_cells)


def cascade_rejudge(
    records: Sequence[CellRecord],
    judge: Judge,
    base_rate: float | None = None,
) -> CascadeReport:
    """Fresh independent re-judging of already-accepted final responses."""
    not_accepted = [r.cell_id for r in records if not r.ea_accepted]
    if not_accepted:
        raise RunError(f"cascade input must be accepted cells; got {not_accepted[:5]}")
    n_rejudged = 0
    n_agree = 0
    n_skipped = 0
    for rec in records:
        question = Question(
            id=rec.question_id,
            text=rec.question,
            answer_type=rec.answer_type,
            gold_answer=rec.gold_answer,
        )
        try:
            verdict: Judgment = judge.judge(question, rec.error_class, rec.final_response)
        except (BackendError, JudgeProtocolError) as exc:
            logger.warning("cascade skipping cell %s: %s", rec.cell_id, exc)
            n_skipped += 1
            continue
        n_rejudged += 1
        if verdict.accept:
            n_agree += 1
    if n_rejudged == 0:
        raise RunError("cascade re-judged zero cells")
    retention = n_agree / n_rejudged
    return CascadeReport(
        n_rejudged=n_rejudged,
        n_agree=n_agree,
        n_skipped=n_skipped,
        retention=retention,
        compound_estimate=base_rate * retention if base_rate is not None else None,
    )
