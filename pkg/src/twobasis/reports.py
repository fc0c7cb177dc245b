"""Machine-readable verification reports.

Every report embeds the exact rational operands of each inequality, never
only booleans, and serializes rationals as "p/q" strings.  JSON output is
key-sorted with no timestamps, so identical runs produce byte-identical
files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

from .scalars import format_scalar

_OPS = {
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "==": lambda a, b: a == b,
}


@dataclass
class Check:
    name: str
    lhs: Fraction
    op: str
    rhs: Fraction
    ok: bool
    note: str = ""

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "lhs": format_scalar(self.lhs),
            "op": self.op,
            "rhs": format_scalar(self.rhs),
            "pass": self.ok,
        }
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class Report:
    title: str
    checks: List[Check] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def check(self, name: str, lhs: Fraction, op: str, rhs: Fraction,
              note: str = "") -> bool:
        ok = _OPS[op](lhs, rhs)
        self.checks.append(Check(name, Fraction(lhs), op, Fraction(rhs), ok, note))
        return ok

    def record(self, name: str, value) -> None:
        self.extra[name] = value

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.ok]

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "pass": self.ok,
            "checks": [c.to_json() for c in self.checks],
            "extra": self.extra,
        }

    def summary_lines(self) -> List[str]:
        lines = []
        for c in self.checks:
            tag = "PASS" if c.ok else "FAIL"
            lines.append(f"{tag}  {self.title}: {c.name}  "
                         f"[{format_scalar(c.lhs)} {c.op} {format_scalar(c.rhs)}]")
        return lines


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, ensure_ascii=True)
        fh.write("\n")


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=True) + "\n"
