"""Local annotation API plus static review-console hosting.

Read-mostly loopback server over one run directory. The queue lists
unlabeled cells in deterministic (append) order; label posts funnel
through the single-writer label file and are immediately visible to
subsequent queue reads. Optimistic concurrency: queue items carry a
``rev`` (number of label events seen at fetch time) and a submission
carrying a stale ``expected_rev`` is rejected with 409 so the client
refetches.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import store, taxonomy
from .metrics import outcome_of

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>errforge annotation</title></head>
<body>
<h1>errforge annotation server</h1>
<p>The review console is not built. The API is live:</p>
<ul>
<li>GET /api/queue?limit=N</li>
<li>POST /api/labels</li>
<li>GET /api/progress</li>
<li>GET /api/classes</li>
</ul>
</body></html>
"""


class LabelSubmission(BaseModel):
    cell_id: str
    human_examination: int
    annotator: str
    sublabel: str | None = None
    refusal_override: bool | None = None
    expected_rev: int | None = None


def _queue_item(eff: store.EffectiveRecord, rev: int) -> dict:
    rec = eff.record
    return {
        "cell_id": rec.cell_id,
        "question": rec.question,
        "gold_answer": rec.gold_answer,
        "answer_type": rec.answer_type,
        "error_class": rec.error_class,
        "error_class_name": rec.error_class_name,
        "response": rec.final_response,
        "is_refusal": rec.is_refusal,
        "refusal_matches": list(rec.refusal_matches),
        "pipeline": rec.pipeline,
        "backend": rec.backend_id,
        "rev": rev,
    }


def create_app(run_dir: str | Path, console_dir: str | Path | None = None) -> FastAPI:
    run_dir = Path(run_dir)
    app = FastAPI(title="errforge annotation")
    write_lock = threading.Lock()

    def load() -> list[store.EffectiveRecord]:
        return store.effective_records(run_dir)

    @app.get("/api/queue")
    def queue(limit: int = 50, include_labeled: bool = False) -> dict:
        items = []
        for eff in load():
            if eff.record.failed:
                continue
            if eff.human_examination is not None and not include_labeled:
                continue
            items.append(_queue_item(eff, rev=len(eff.label_history)))
            if len(items) >= limit:
                break
        return {"items": items}

    @app.get("/api/progress")
    def progress() -> dict:
        per_group: dict[str, dict[str, int]] = {}
        total = labeled = 0
        for eff in load():
            key = f"{eff.record.pipeline}/E{eff.record.error_class}"
            bucket = per_group.setdefault(key, {"labeled": 0, "total": 0})
            bucket["total"] += 1
            total += 1
            if eff.human_examination is not None:
                bucket["labeled"] += 1
                labeled += 1
        return {"labeled": labeled, "total": total, "groups": per_group}

    @app.get("/api/classes")
    def classes() -> dict:
        return {
            "classes": [
                {
                    "id": c.id,
                    "name": c.name,
                    "definition": c.definition,
                    "prompt_definition": c.prompt_definition,
                }
                for c in taxonomy.all_classes()
            ]
        }

    @app.post("/api/labels")
    def submit(label: LabelSubmission) -> dict:
        if label.human_examination not in (0, 1):
            raise HTTPException(status_code=422, detail="human_examination must be 0 or 1")
        with write_lock:
            history = [
                e for e in store.read_labels(run_dir) if e.cell_id == label.cell_id
            ]
            if label.expected_rev is not None and label.expected_rev != len(history):
                raise HTTPException(
                    status_code=409,
                    detail=f"stale revision: expected {label.expected_rev}, have {len(history)}",
                )
            try:
                eff = store.apply_label(
                    run_dir,
                    store.LabelEvent(
                        cell_id=label.cell_id,
                        human_examination=label.human_examination,
                        annotator=label.annotator,
                        sublabel=label.sublabel,
                        refusal_override=label.refusal_override,
                        timestamp=time.time(),
                    ),
                )
            except store.UnknownCellError:
                raise HTTPException(status_code=404, detail=f"unknown cell {label.cell_id}")
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        return {
            "cell_id": label.cell_id,
            "rev": len(eff.label_history),
            "outcome": outcome_of(eff),
        }

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(console_dir), html=True), name="console")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return _FALLBACK_PAGE

    return app
