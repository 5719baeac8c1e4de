import pytest
from hypothesis import given, strategies as st

from errforge.backends import CallUsage, CellUsageTotal
from errforge.examination import Judgment
from errforge.generation import Draft
from errforge.metrics import (
    MetricsError,
    OUTCOME_RIGHT_CLASS,
    OUTCOME_WRONG_CLASS,
    UnlabeledCellError,
    acceptance_at_k,
    acceptance_curve,
    cost_report,
    outcome_breakdown,
    outcome_of,
    retry_stats,
    subject_breakdown,
    targeted_error_rate,
)
from errforge.questions import SubjectMap
from errforge.store import Attempt, CellRecord, EffectiveRecord, LabelEvent


def make_record(
    cell_id="q1:c1",
    question_id="q1",
    error_class=1,
    pipeline="P1",
    backend_id="scripted",
    n_attempts=1,
    ea_accepted=True,
    emitted_at_cap=False,
    single_pass=False,
    is_refusal=False,
    failed=False,
    usage_total=None,
):
    accept_flags = [False] * (n_attempts - 1) + [ea_accepted]
    attempts = [
        Attempt(
            draft=Draft(text=f"draft {i}", attempt_index=i + 1, usage=CallUsage(10, 5, 0, 0.1)),
            judgment=None
            if single_pass
            else Judgment(
                is_incorrect=accept_flags[i],
                class_match=accept_flags[i],
                accept=accept_flags[i],
            ),
        )
        for i in range(n_attempts)
    ]
    return CellRecord(
        run_id="run",
        cell_id=cell_id,
        question_id=question_id,
        question="q text",
        answer_type="integer",
        gold_answer=1,
        error_class=error_class,
        pipeline=pipeline,
        backend_id=backend_id,
        attempts=attempts,
        final_response=attempts[-1].draft.text,
        ea_accepted=ea_accepted,
        emitted_at_cap=emitted_at_cap,
        single_pass=single_pass,
        is_refusal=is_refusal,
        refusal_matches=(),
        usage_total=usage_total or CellUsageTotal(input_tokens=10, output_tokens=5, usd=0.001, latency_s=0.1),
        started_at=0.0,
        finished_at=0.0,
        failed=failed,
    )


def labeled(record, human=None, sublabel=None, refusal_override=None):
    label = None
    if human is not None:
        label = LabelEvent(
            record.cell_id,
            human,
            annotator="t",
            sublabel=sublabel,
            refusal_override=refusal_override,
        )
    return EffectiveRecord(record=record, label=label, label_history=[label] if label else [])


class TestOutcomeRule:
    def test_success(self):
        eff = labeled(make_record(), human=1)
        assert outcome_of(eff) == OUTCOME_RIGHT_CLASS

    def test_refusal_demotes_success(self):
        eff = labeled(make_record(is_refusal=True), human=1)
        assert outcome_of(eff) == OUTCOME_WRONG_CLASS

    def test_override_can_demote(self):
        eff = labeled(make_record(is_refusal=False), human=1, refusal_override=True)
        assert outcome_of(eff) == OUTCOME_WRONG_CLASS

    def test_override_can_rescue(self):
        eff = labeled(make_record(is_refusal=True), human=1, refusal_override=False)
        assert outcome_of(eff) == OUTCOME_RIGHT_CLASS

    def test_human_zero_uses_sublabel(self):
        eff = labeled(make_record(), human=0, sublabel="correct")
        assert outcome_of(eff) == "correct"
        eff2 = labeled(make_record(), human=0, sublabel="incorrect_wrong_class")
        assert outcome_of(eff2) == OUTCOME_WRONG_CLASS

    def test_human_zero_defaults_to_wrong_class(self):
        eff = labeled(make_record(), human=0)
        assert outcome_of(eff) == OUTCOME_WRONG_CLASS

    def test_unlabeled_is_none(self):
        assert outcome_of(labeled(make_record())) is None


class TestTargetedErrorRate:
    def hand_set(self):
        # 7 success, 2 refusal-demoted, 1 human-zero: rate 0.7.
        effs = []
        for i in range(7):
            effs.append(labeled(make_record(cell_id=f"a{i}:c1"), human=1))
        for i in range(2):
            effs.append(labeled(make_record(cell_id=f"b{i}:c1", is_refusal=True), human=1))
        effs.append(labeled(make_record(cell_id="c0:c1"), human=0, sublabel="correct"))
        return effs

    def test_hand_counted_rate(self):
        table = targeted_error_rate(self.hand_set())
        assert table.rows["all"]["targeted_error_rate"] == pytest.approx(0.7)
        assert table.counts["all"] == 10

    def test_unlabeled_raises(self):
        effs = self.hand_set() + [labeled(make_record(cell_id="u:c1"))]
        with pytest.raises(UnlabeledCellError) as exc:
            targeted_error_rate(effs)
        assert "u:c1" in str(exc.value)

    def test_group_by_pipeline(self):
        effs = [
            labeled(make_record(cell_id="a:c1", pipeline="P1"), human=1),
            labeled(make_record(cell_id="b:c1", pipeline="P3", is_refusal=True), human=1),
        ]
        table = targeted_error_rate(effs, group_by="pipeline")
        assert table.rows["P1"]["targeted_error_rate"] == 1.0
        assert table.rows["P3"]["targeted_error_rate"] == 0.0

    def test_group_by_class_labels(self):
        effs = [labeled(make_record(cell_id="a:c3", error_class=3), human=1)]
        table = targeted_error_rate(effs, group_by="class")
        assert list(table.rows) == ["E3"]

    def test_unknown_group_key(self):
        with pytest.raises(MetricsError):
            targeted_error_rate(self.hand_set(), group_by="subject_area")

    def test_breakdown_counts(self):
        effs = self.hand_set() + [labeled(make_record(cell_id="u:c1"))]
        counts = outcome_breakdown(effs)
        assert counts == {
            "correct": 1,
            "incorrect_wrong_class": 2,
            "incorrect_right_class": 7,
            "unlabeled": 1,
        }


class TestAcceptance:
    def budget_set(self):
        # 6@1, 2@2, 1@3, 1 never (cap 5).
        recs = []
        for i in range(6):
            recs.append(make_record(cell_id=f"a{i}:c1", n_attempts=1))
        for i in range(2):
            recs.append(make_record(cell_id=f"b{i}:c1", n_attempts=2))
        recs.append(make_record(cell_id="c0:c1", n_attempts=3))
        recs.append(
            make_record(cell_id="d0:c1", n_attempts=5, ea_accepted=False, emitted_at_cap=True)
        )
        return recs

    def test_hand_counted_curve(self):
        curve = acceptance_curve(self.budget_set(), [1, 2, 3, 4, 5])
        assert curve == {1: 0.6, 2: 0.8, 3: 0.9, 4: 0.9, 5: 1.0}

    def test_monotone_nondecreasing(self):
        curve = acceptance_curve(self.budget_set(), range(1, 6))
        values = list(curve.values())
        assert values == sorted(values)

    def test_single_pass_records_excluded(self):
        recs = self.budget_set() + [
            make_record(cell_id="sp:c1", single_pass=True) for _ in range(5)
        ]
        assert acceptance_at_k(recs, 1) == 0.6

    def test_failed_records_excluded(self):
        recs = self.budget_set() + [make_record(cell_id="f:c1", failed=True)]
        assert acceptance_at_k(recs, 1) == 0.6

    def test_no_loop_records_is_an_error(self):
        with pytest.raises(MetricsError):
            acceptance_at_k([make_record(single_pass=True)], 1)

    def test_bad_k(self):
        with pytest.raises(MetricsError):
            acceptance_at_k(self.budget_set(), 0)

    @given(st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=40))
    def test_property_monotone_in_k(self, accepted_at):
        recs = [
            make_record(cell_id=f"x{i}:c1", n_attempts=a)
            for i, a in enumerate(accepted_at)
        ]
        prev = 0.0
        for k in range(1, 7):
            now = acceptance_at_k(recs, k)
            assert now >= prev
            prev = now
        assert acceptance_at_k(recs, 5) == 1.0


class TestRetryStats:
    def test_mean_attempts_and_redo(self):
        recs = [
            make_record(cell_id="a:c1", n_attempts=1),
            make_record(cell_id="b:c1", n_attempts=3),
            make_record(cell_id="c:c2", error_class=2, n_attempts=8),  # redo > 5
        ]
        table = retry_stats(recs)
        assert table.rows["E1"]["mean_attempts"] == pytest.approx(2.0)
        assert table.rows["E2"]["mean_attempts"] == pytest.approx(8.0)
        assert table.rows["all"]["mean_attempts"] == pytest.approx(4.0)
        assert table.rows["all"]["redo_gt5"] == 1.0
        assert table.rows["E1"]["redo_gt5"] == 0.0

    def test_single_pass_reference_row(self):
        recs = [make_record(cell_id=f"s{i}:c1", single_pass=True) for i in range(4)]
        table = retry_stats(recs)
        assert table.rows["all"]["mean_attempts"] == 1.0
        assert table.rows["all"]["redo_gt5"] == 0.0

    def test_retries_is_attempts_minus_one(self):
        rec = make_record(n_attempts=4)
        assert rec.retries == 3


class TestCostReport:
    def test_sums_and_percentiles(self):
        totals = [
            CellUsageTotal(input_tokens=700, output_tokens=32, usd=0.002, latency_s=1.0),
            CellUsageTotal(input_tokens=300, output_tokens=10, usd=0.001, latency_s=2.0),
        ]
        recs = [
            make_record(cell_id=f"t{i}:c1", usage_total=t) for i, t in enumerate(totals)
        ]
        table = cost_report(recs)
        row = table.rows["all"]
        assert row["tokens_med"] == 310.0
        assert row["tokens_p95"] == 732.0
        assert row["tokens_mean"] == pytest.approx(521.0)
        assert row["usd_mean"] == pytest.approx(0.0015)
        assert row["latency_p95"] == 2.0

    def test_group_by_backend(self):
        recs = [
            make_record(cell_id="a:c1", backend_id="o3"),
            make_record(cell_id="b:c1", backend_id="gpt-5"),
        ]
        table = cost_report(recs, group_by="backend")
        assert set(table.rows) == {"o3", "gpt-5"}

    def test_empty_is_an_error(self):
        with pytest.raises(MetricsError):
            cost_report([])


class TestSubjectBreakdown:
    def test_rebucketed_rates(self):
        smap = SubjectMap({"q1": "algebra", "q2": "algebra", "q3": "analysis"})
        effs = [
            labeled(make_record(cell_id="q1:c1", question_id="q1"), human=1),
            labeled(make_record(cell_id="q2:c1", question_id="q2", is_refusal=True), human=1),
            labeled(make_record(cell_id="q3:c1", question_id="q3"), human=1),
        ]
        table = subject_breakdown(effs, smap)
        assert table.rows["algebra"]["targeted_error_rate"] == pytest.approx(0.5)
        assert table.rows["analysis"]["targeted_error_rate"] == 1.0
        assert table.counts["algebra"] == 2

    def test_unmapped_question_is_an_error(self):
        smap = SubjectMap({"q1": "algebra"})
        effs = [labeled(make_record(question_id="q9"), human=1)]
        with pytest.raises(MetricsError, match="q9"):
            subject_breakdown(effs, smap)

    def test_unlabeled_is_an_error(self):
        smap = SubjectMap({"q1": "algebra"})
        with pytest.raises(UnlabeledCellError):
            subject_breakdown([labeled(make_record(question_id="q1"))], smap)

    def test_null_bucket_reported_as_unbucketed(self):
        smap = SubjectMap({"q1": None})
        effs = [labeled(make_record(question_id="q1"), human=1)]
        table = subject_breakdown(effs, smap)
        assert list(table.rows) == ["unbucketed"]
