"""Container for backward-recursion output and its JSON serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import IndexOutOfRange, NotSolvable, UnknownSupportValue

KINDS = ("literal", "measurable", "white", "delayed")


def lookup(table: dict, w: float, k: int):
    try:
        return table[w]
    except KeyError:
        raise UnknownSupportValue(w, k) from None


@dataclass
class Schedule:
    """Stages indexed by step ``k`` (``stages[k]``), k = 0..N.

    When the recursion stopped early (``solvable`` false) the stages below the
    failing step are ``None`` and ``failure`` holds the error.
    """

    kind: str
    N: int
    stages: list
    support: tuple[float, ...] = ()
    failure: NotSolvable | None = None
    # control-noise coupling needed by the delayed feedback law
    B2: np.ndarray | None = None

    @property
    def solvable(self) -> bool:
        return self.failure is None

    def stage(self, k: int):
        if not 0 <= k < len(self.stages):
            raise IndexOutOfRange(f"step {k} outside 0..{len(self.stages) - 1}")
        st = self.stages[k]
        if st is None:
            raise IndexOutOfRange(f"step {k} was not reached: {self.failure}")
        return st

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": self.kind,
            "N": self.N,
            "solvable": self.solvable,
            "support": list(self.support),
        }
        if self.failure is not None:
            f = self.failure
            out["failure"] = {"k": f.k, "w": f.w, "condition": f.condition,
                              "min_eig": f.min_eig}
        if self.B2 is not None:
            out["B2"] = self.B2.tolist()
        out["stages"] = [None if st is None else stage_to_dict(st) for st in self.stages]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        failure = None
        if d.get("failure"):
            f = d["failure"]
            failure = NotSolvable(f["k"], f["condition"], f["min_eig"], f["w"])
        stages = [None if s is None else stage_from_dict(d["kind"], s) for s in d["stages"]]
        B2 = np.array(d["B2"], dtype=float) if "B2" in d else None
        return cls(d["kind"], d["N"], stages, tuple(d.get("support", ())), failure, B2)

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        return cls.from_dict(json.loads(text))


# Per kind: matrix fields, and whether they are tables over w.
_FIELDS = {
    "literal": (("Upsilon", "M", "P", "G"), True),
    "measurable": (("S", "G", "H"), True),
    "white": (("Pw", "Mbar", "Rk", "K"), False),
    "delayed": (("P", "Rk", "T0", "T1", "F"), False),
}


def stage_to_dict(st) -> dict:
    names, tabular = _FIELDS[st.kind]
    if not tabular:
        return {"k": st.k, **{f: getattr(st, f).tolist() for f in names}}
    keys = list(getattr(st, names[0]))
    rows = [{"w": w, **{f: getattr(st, f)[w].tolist() for f in names}} for w in keys]
    return {"k": st.k, "tables": rows}


def stage_from_dict(kind: str, d: dict):
    # local import: stage classes live in the solver modules
    from .riccati_delay import DelayedStage
    from .riccati_free import StageLiteral, ValueTable, WhiteStage

    cls = {"literal": StageLiteral, "measurable": ValueTable,
           "white": WhiteStage, "delayed": DelayedStage}[kind]
    names, tabular = _FIELDS[kind]
    if not tabular:
        return cls(k=d["k"], **{f: np.array(d[f], dtype=float) for f in names})
    tables: dict[str, dict] = {f: {} for f in names}
    for row in d["tables"]:
        w = float(row["w"])
        for f in names:
            tables[f][w] = np.array(row[f], dtype=float)
    return cls(k=d["k"], **tables)

