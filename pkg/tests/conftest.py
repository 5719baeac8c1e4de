import re

import pytest

from errforge.backends import CallUsage, ScriptedBackend
from errforge.questions import Question, serialize

GA_USAGE = CallUsage(input_tokens=100, output_tokens=50, reasoning_tokens=0, latency_s=0.5)
EA_USAGE = CallUsage(input_tokens=200, output_tokens=10, reasoning_tokens=0, latency_s=0.2)

ACCEPT = "incorrect: yes\nclass match: yes"
REJECT = "incorrect: yes\nclass match: no"

_QID_RX = re.compile(r"\[(q\d+)\]")
_TYPE_RX = re.compile(r"error type (\d)")
_MARKER_RX = re.compile(r"<<[^>]+>>")


def make_pool(n, prefix="q"):
    """Synthetic pool whose question texts carry a [qid] marker for scripts."""
    return [
        Question(
            id=f"{prefix}{i:03d}",
            text=f"Scripted question [{prefix}{i:03d}]: compute the widget count.",
            answer_type="integer",
            gold_answer=i,
            subject="synthetic",
        )
        for i in range(n)
    ]


def write_pool(pool, tmp_path, name="pool.jsonl"):
    path = tmp_path / name
    serialize(pool, path)
    return str(path)


def draft_marker(qid, cls, attempt):
    return f"<<{qid}/c{cls}|a{attempt}>>"


def ga_key(text):
    qid = _QID_RX.search(text)
    cls = _TYPE_RX.search(text)
    if not qid or not cls:
        return None
    return f"{qid.group(1)}/c{cls.group(1)}"


def ea_key(text):
    markers = _MARKER_RX.findall(text)
    # A feedback prompt can quote the previous draft; the candidate
    # response is the last marker in the rendered judge prompt.
    return markers[-1] if markers else None


def make_scripted_pair(schedule, cap=5, classes=(1, 2, 3, 4, 5)):
    """Build GA/EA scripted backends from an acceptance schedule.

    ``schedule`` maps (qid, class_id) -> attempt index at which the
    judge accepts, or None for never (the loop then runs to the cap).
    """
    ga_script = {}
    ea_script = {}
    for (qid, cls), accept_at in schedule.items():
        n_attempts = accept_at if accept_at is not None else cap
        key = f"{qid}/c{cls}"
        ga_script[key] = [
            (f"Committed wrong answer {draft_marker(qid, cls, k)}.", GA_USAGE)
            for k in range(1, n_attempts + 1)
        ]
        for k in range(1, n_attempts + 1):
            verdict = ACCEPT if accept_at is not None and k == accept_at else REJECT
            ea_script[draft_marker(qid, cls, k)] = [(verdict, EA_USAGE)]
    ga = ScriptedBackend(ga_script, backend_id="scripted", key_fn=ga_key)
    ea = ScriptedBackend(ea_script, backend_id="scripted", key_fn=ea_key)
    return ga, ea


@pytest.fixture
def fixed_clock():
    return lambda: 0.0
