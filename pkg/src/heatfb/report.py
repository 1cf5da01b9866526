"""Named check records shared by scene validation and solution diagnostics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

PASS = "pass"
FAIL = "fail"
REPORT = "report"
NOT_APPLICABLE = "n/a"
STATUSES = (PASS, FAIL, REPORT, NOT_APPLICABLE)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


@dataclass
class Record:
    name: str
    status: str
    value: float | None = None
    bound: float | None = None
    label: str = ""
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def ok(self) -> bool:
        return self.status != FAIL


@dataclass
class Report:
    records: list[Record] = field(default_factory=list)

    def add(self, *records: Record) -> "Report":
        self.records.extend(records)
        return self

    def extend(self, other: "Report | list[Record]") -> "Report":
        self.records.extend(other.records if isinstance(other, Report) else other)
        return self

    def __getitem__(self, name: str) -> Record:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(r.name == name for r in self.records)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.records)

    @property
    def failures(self) -> list[Record]:
        return [r for r in self.records if r.status == FAIL]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "records": [_clean(asdict(r)) for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        recs = []
        for r in d["records"]:
            r = dict(r)
            for key in ("value", "bound"):
                if isinstance(r.get(key), str):
                    r[key] = float(r[key])
            recs.append(Record(**r))
        return cls(recs)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def summary(self) -> str:
        lines = []
        for r in self.records:
            val = "" if r.value is None else f" value={r.value:.6g}"
            bnd = "" if r.bound is None else f" bound={r.bound:.6g}"
            lines.append(f"[{r.status:>6}] {r.name}{val}{bnd}")
        return "\n".join(lines)
