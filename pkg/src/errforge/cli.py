"""Operator command line: run plans, resume, score, export, serve annotation.

Configuration precedence is flags > plan file > environment; the
effective plan is snapshotted into the run manifest. Failures exit
nonzero with a single machine-parsable line on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from importlib import resources
from pathlib import Path

import click

from . import metrics, reports, store
from .backends import Backend, OpenAIBackend, ScriptedBackend
from .examination import ClassifierJudge, Judge, PromptedJudge
from .loop import LoopEngine, cascade_rejudge
from .pipelines import RunPlan, config_for, validate
from .questions import SubjectMap


def _fail(exc: BaseException) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _command_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001 - the CLI error contract
            _fail(exc)

    return wrapper


def _parse_classes(spec: str) -> tuple[int, ...]:
    out: set[int] = set()
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        elif part:
            out.add(int(part))
    return tuple(sorted(out))


def _parse_range(spec: str) -> tuple[int, int]:
    lo, hi = spec.replace("..", ":").split(":")
    return int(lo), int(hi)


def _default_pool() -> str:
    data = resources.files("errforge.data").joinpath("tier1_pool.jsonl")
    with resources.as_file(data) as path:
        return str(path)


def _build_backend(backend_id: str, script: str | None) -> Backend:
    if backend_id == "scripted":
        if not script:
            raise click.UsageError("--backend scripted requires --script FILE")
        return ScriptedBackend.load(script)
    return OpenAIBackend(model=backend_id)


def _build_judge(plan: RunPlan, ea_script: str | None) -> Judge | None:
    kind = plan.pipeline.ea_kind
    if kind == "none":
        return None
    if kind == "classifier":
        return ClassifierJudge(plan.judge_endpoint, threshold=plan.judge_threshold)
    ea_backend_id = plan.ea_backend_id or plan.backend_id
    backend = _build_backend(ea_backend_id, ea_script)
    return PromptedJudge(backend, context_docs=plan.context_docs)


@click.group()
def main() -> None:
    """Taxonomy-targeted synthetic error generation."""


_plan_options = [
    click.option("--plan", "plan_file", type=click.Path(exists=True), help="Run-plan JSON file; flags override its values."),
    click.option("--pipeline", "pipeline_id", type=str, help="Pipeline id P0..P8."),
    click.option("--backend", "backend_id", type=str, help="GA backend: model name or 'scripted'."),
    click.option("--ea-backend", "ea_backend_id", type=str, help="Prompted-EA backend; defaults to --backend."),
    click.option("--pool", "pool_file", type=click.Path(exists=True), help="Question-pool JSONL (default: bundled first-20 pool)."),
    click.option("--questions", "question_range", type=str, help="Pool slice, e.g. 0..20 (start..stop)."),
    click.option("--classes", "classes_spec", type=str, help="Target classes, e.g. 1-5 or 1,3,5."),
    click.option("--cap", "retry_cap", type=int, help="Attempt cap (default 5)."),
    click.option("--unlimited", is_flag=True, default=False, help="Unlimited retries (no cap)."),
    click.option("--parallel", "parallelism", type=int, help="Concurrent cells (default 1)."),
    click.option("--out", "out_dir", type=click.Path(), help="Run directory."),
    click.option("--script", type=click.Path(exists=True), help="GA script file for the scripted backend."),
    click.option("--ea-script", type=click.Path(exists=True), help="EA script file for a scripted prompted judge."),
    click.option("--judge-endpoint", type=str, help="Classifier judge protocol URL (P8)."),
    click.option("--threshold", "judge_threshold", type=float, help="Classifier acceptance threshold (default 0.5)."),
    click.option("--mix-map", "mix_map_json", type=str, help='Hybrid exemplar mix, e.g. \'{"1":"base","2":"expanded"}\'.'),
    click.option("--context-doc", "context_docs", type=click.Path(exists=True), multiple=True, help="Textbook excerpt file(s) for the EA."),
    click.option("--run-id", type=str, help="Run identifier stored on every record."),
    click.option("--max-cells", type=int, help="Stop after N cells this invocation (run stays resumable)."),
]


def plan_options(fn):
    for opt in reversed(_plan_options):
        fn = opt(fn)
    return fn


def _assemble_plan(
    plan_file, pipeline_id, backend_id, ea_backend_id, pool_file, question_range,
    classes_spec, retry_cap, unlimited, parallelism, out_dir, judge_endpoint,
    judge_threshold, mix_map_json, context_docs, run_id,
) -> RunPlan:
    if plan_file:
        plan = RunPlan.load(plan_file)
    else:
        if not pipeline_id or not backend_id or not out_dir:
            raise click.UsageError("--pipeline, --backend and --out are required without --plan")
        plan = RunPlan(
            pipeline=config_for(pipeline_id),
            backend_id=backend_id,
            classes=(1, 2, 3, 4, 5),
            pool_file=_default_pool(),
            out_dir=out_dir,
        )
    if pipeline_id:
        cap = plan.pipeline.retry_cap
        plan.pipeline = config_for(pipeline_id, retry_cap=cap)
    if backend_id:
        plan.backend_id = backend_id
    if ea_backend_id:
        plan.ea_backend_id = ea_backend_id
    if pool_file:
        plan.pool_file = pool_file
    if question_range:
        plan.question_range = _parse_range(question_range)
    if classes_spec:
        plan.classes = _parse_classes(classes_spec)
    if unlimited:
        plan.pipeline = config_for(plan.pipeline.id, retry_cap=None)
    elif retry_cap is not None:
        plan.pipeline = config_for(plan.pipeline.id, retry_cap=retry_cap)
    if parallelism is not None:
        plan.parallelism = parallelism
    if out_dir:
        plan.out_dir = out_dir
    if judge_endpoint:
        plan.judge_endpoint = judge_endpoint
    if judge_threshold is not None:
        plan.judge_threshold = judge_threshold
    if mix_map_json:
        plan.mix_map = {int(k): v for k, v in json.loads(mix_map_json).items()}
    if context_docs:
        plan.context_docs = tuple(
            Path(p).read_text(encoding="utf-8") for p in context_docs
        )
    if run_id:
        plan.run_id = run_id
    problems = validate(plan)
    if problems:
        raise click.UsageError("invalid plan: " + "; ".join(problems))
    return plan


def _run_or_resume(resume: bool, script, ea_script, max_cells, **plan_kwargs) -> None:
    plan = _assemble_plan(**plan_kwargs)
    ga_backend = _build_backend(plan.backend_id, script)
    judge = _build_judge(plan, ea_script)
    engine = LoopEngine(plan, ga_backend, judge)
    records = engine.resume(max_cells=max_cells) if resume else engine.run(max_cells=max_cells)
    total = len(store.read_records(plan.out_dir))
    click.echo(
        f"{'resumed' if resume else 'ran'} {len(records)} cells "
        f"({total} persisted) in {plan.out_dir}"
    )


@main.command()
@plan_options
@_command_errors
def run(script, ea_script, max_cells, **plan_kwargs) -> None:
    """Execute a run plan; completed cells persist incrementally."""
    _run_or_resume(False, script, ea_script, max_cells, **plan_kwargs)


@main.command()
@plan_options
@_command_errors
def resume(script, ea_script, max_cells, **plan_kwargs) -> None:
    """Complete the unfinished cells of an existing run directory."""
    _run_or_resume(True, script, ea_script, max_cells, **plan_kwargs)


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Report directory (default <run>/reports).")
@click.option("--group-by", "group_bys", multiple=True, default=("all", "class"), help="Grouping keys for the rate tables.")
@click.option("--subjects", "subjects_file", type=click.Path(exists=True), help="Subject-map JSON for the per-subject table.")
@click.option("--figures/--no-figures", default=True)
@_command_errors
def score(run_dir, out_dir, group_bys, subjects_file, figures) -> None:
    """Targeted-error rate tables over the labeled cells of a run."""
    out = Path(out_dir) if out_dir else Path(run_dir) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    effs = store.effective_records(run_dir)
    breakdown = metrics.outcome_breakdown(effs)
    labeled = [e for e in effs if e.human_examination is not None]
    with open(out / "outcomes.json", "w", encoding="utf-8") as fh:
        json.dump(breakdown, fh, indent=2)
    click.echo(
        f"cells: {len(effs)}  labeled: {len(labeled)}  unlabeled: {breakdown['unlabeled']}"
    )
    if not labeled:
        click.echo("no labeled cells; rate tables skipped")
        return
    for group_by in group_bys:
        table = metrics.targeted_error_rate(labeled, group_by=group_by)
        base = out / f"targeted_error_rate_by_{group_by}"
        reports.write_table(table, base)
        if figures:
            reports.write_bar_figure(
                table, "targeted_error_rate", base.with_suffix(".png"),
                title=f"Targeted-error rate by {group_by}", ylabel="rate",
            )
        click.echo(render_inline(table))
    if subjects_file:
        table = metrics.subject_breakdown(labeled, SubjectMap.load(subjects_file))
        base = out / "targeted_error_rate_by_subject"
        reports.write_table(table, base)
        if figures:
            reports.write_bar_figure(
                table, "targeted_error_rate", base.with_suffix(".png"),
                title="Targeted-error rate by subject", ylabel="rate",
            )
        click.echo(render_inline(table))


def render_inline(table: metrics.ReportTable) -> str:
    return reports.render_text(table)


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--k", "k_spec", type=str, default="1..5", help="Budget range, e.g. 1..5.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--figures/--no-figures", default=True)
@_command_errors
def curves(run_dir, k_spec, out_dir, figures) -> None:
    """Acceptance-vs-retry-budget curve for a capped loop run."""
    out = Path(out_dir) if out_dir else Path(run_dir) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    records = store.read_records(run_dir)
    lo, hi = _parse_range(k_spec)
    ks = list(range(lo, hi + 1))
    curve = metrics.acceptance_curve(records, ks)
    table = metrics.ReportTable(group_by="pipeline", columns=[f"k={k}" for k in ks])
    pipelines = sorted({r.pipeline for r in records if not r.single_pass})
    for pid in pipelines:
        sub = [r for r in records if r.pipeline == pid]
        sub_curve = metrics.acceptance_curve(sub, ks)
        table.rows[pid] = {f"k={k}": sub_curve[k] for k in ks}
        table.counts[pid] = len([r for r in sub if not r.single_pass and not r.failed])
    base = out / "acceptance_curve"
    reports.write_table(table, base)
    if figures:
        per_pipe = {
            pid: {k: table.rows[pid][f"k={k}"] for k in ks} for pid in pipelines
        }
        reports.write_curve_figure(per_pipe, base.with_suffix(".png"), "Loop acceptance vs retry budget")
    click.echo(reports.render_text(table))
    click.echo("overall: " + "  ".join(f"k={k}: {curve[k]:.3f}" for k in ks))


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--group-by", "group_by", default="pipeline")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--figures/--no-figures", default=True)
@_command_errors
def costs(run_dir, group_by, out_dir, figures) -> None:
    """Per-cell token/$-cost/latency shape (median, p95, mean)."""
    out = Path(out_dir) if out_dir else Path(run_dir) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    records = store.read_records(run_dir)
    table = metrics.cost_report(records, group_by=group_by)
    base = out / f"cost_shape_by_{group_by}"
    reports.write_table(table, base)
    if figures:
        reports.write_bar_figure(
            table, "tokens_p95", base.with_suffix(".png"),
            title=f"p95 tokens per cell by {group_by}", ylabel="tokens",
        )
    click.echo(reports.render_text(table))


@main.command("export-train")
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--split", "split_spec", default="60/20/20", help="Train/val/test percentages.")
@click.option("--seed", type=int, default=42)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_command_errors
def export_train(run_dir, split_spec, seed, out_dir) -> None:
    """Export labeled cells as classifier training examples."""
    parts = [float(p) for p in split_spec.split("/")]
    fractions = [p / sum(parts) for p in parts]
    effs = [e for e in store.effective_records(run_dir) if e.human_examination is not None]
    if not effs:
        raise click.UsageError("no labeled cells to export")
    summary = store.export_training_set(effs, fractions, seed, out_dir)
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--ea-backend", "ea_backend_id", default="scripted")
@click.option("--ea-script", type=click.Path(exists=True), help="Script for a scripted cascade judge.")
@click.option("--base-rate", type=float, default=None, help="Baseline rate for the compound estimate.")
@click.option("--out", "out_file", type=click.Path(), default=None)
@_command_errors
def cascade(run_dir, ea_backend_id, ea_script, base_rate, out_file) -> None:
    """Re-judge the accepted cells of a run with a fresh judge."""
    records = [r for r in store.read_records(run_dir) if r.ea_accepted and not r.single_pass]
    judge = PromptedJudge(_build_backend(ea_backend_id, ea_script))
    report = cascade_rejudge(records, judge, base_rate=base_rate)
    payload = {
        "n_rejudged": report.n_rejudged,
        "n_agree": report.n_agree,
        "n_skipped": report.n_skipped,
        "retention": report.retention,
        "compound_estimate": report.compound_estimate,
    }
    if out_file:
        Path(out_file).parent.mkdir(parents=True, exist_ok=True)
        with open(out_file, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    click.echo(json.dumps(payload, indent=2))


@main.command()
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8718, show_default=True)
@click.option("--console", "console_dir", type=click.Path(), default=None, help="Static console assets to serve at /.")
@_command_errors
def annotate(run_dir, host, port, console_dir) -> None:
    """Serve the annotation API and review console over local HTTP."""
    import uvicorn

    from .annotate import create_app

    app = create_app(run_dir, console_dir=console_dir)
    click.echo(f"annotation server on http://{host}:{port} over {run_dir}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
