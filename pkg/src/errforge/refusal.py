"""Epistemic-refusal flagging over final output text.

A response that hedges ("I don't recall", "I'm not sure") is not a
usable targeted error even when it also commits to an answer, so the
rule set is deliberately permissive: any match anywhere in the text
fires the flag. Matching is case-insensitive; typographic apostrophes
are normalized to ASCII before matching. The rules ship as a versioned
data file so the firing rule names can be audited per record.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_APOSTROPHES = {ord("’"): "'", ord("‘"): "'", ord("ʼ"): "'"}


@dataclass(frozen=True)
class RefusalMatch:
    flag: bool
    matches: tuple[str, ...]


class RefusalRuleSet:
    def __init__(self, rules: list[tuple[str, str]], version: str):
        if not rules:
            raise ValueError("refusal rule set must be non-empty")
        self.version = version
        self._compiled = [(name, re.compile(pat, re.IGNORECASE)) for name, pat in rules]

    @property
    def rule_names(self) -> list[str]:
        return [name for name, _ in self._compiled]

    def is_refusal(self, text: str) -> RefusalMatch:
        """Flag ``text`` plus the names of every rule that fired."""
        normalized = text.translate(_APOSTROPHES)
        hits = tuple(
            name for name, rx in self._compiled if rx.search(normalized)
        )
        return RefusalMatch(flag=bool(hits), matches=hits)

    @classmethod
    def load(cls, path: str | Path) -> "RefusalRuleSet":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            [(r["name"], r["pattern"]) for r in obj["rules"]],
            version=obj.get("version", "unversioned"),
        )

    @classmethod
    def default(cls) -> "RefusalRuleSet":
        data = resources.files("errforge.data").joinpath("refusal_rules.json")
        with resources.as_file(data) as path:
            return cls.load(path)


_default: RefusalRuleSet | None = None


def default_rules() -> RefusalRuleSet:
    global _default
    if _default is None:
        _default = RefusalRuleSet.default()
    return _default


def is_refusal(text: str) -> RefusalMatch:
    """Flag ``text`` against the packaged rule set."""
    return default_rules().is_refusal(text)
