"""AST node types for the supported SQL subset.

All nodes are frozen dataclasses: parse trees are immutable values and can be
shared freely across threads. "Editing" an AST always builds a new tree.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

AGG_FUNCS = ("COUNT", "AVG", "MAX", "MIN", "SUM")
COMPARISON_OPS = (">=", "<=", ">", "<", "=", "!=")
MEMBERSHIP_OPS = ("IN", "NOT IN")
PATTERN_OPS = ("LIKE", "NOT LIKE")
COMPOUND_OPS = ("INTERSECT", "UNION", "EXCEPT")


@dataclass(frozen=True)
class ColumnRef:
    column: str
    table: str | None = None

    def key(self) -> str:
        return f"{self.table}.{self.column}" if self.table else self.column


@dataclass(frozen=True)
class Star:
    pass


@dataclass(frozen=True)
class Literal:
    value: Union[int, float, str]
    is_string: bool
    text: str = ""  # verbatim numeric lexeme, preserved so 2.50 renders as written

    def __post_init__(self):
        if not self.text and not self.is_string:
            object.__setattr__(self, "text", str(self.value))

    def render(self) -> str:
        if self.is_string:
            return "'" + str(self.value).replace("'", "''") + "'"
        return self.text


@dataclass(frozen=True)
class FuncCall:
    func: str  # one of AGG_FUNCS
    arg: Union[ColumnRef, Star]


SelectItem = Union[ColumnRef, Star, FuncCall]
Operand = Union[ColumnRef, Star, FuncCall, Literal]


@dataclass(frozen=True)
class Comparison:
    left: Operand
    op: str  # comparison, membership or pattern operator
    right: Union[Operand, "Query"]


@dataclass(frozen=True)
class Between:
    left: Operand
    low: Operand
    high: Operand


@dataclass(frozen=True)
class BoolOp:
    op: str  # AND | OR
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Not:
    operand: "Condition"


Condition = Union[Comparison, Between, BoolOp, Not]


@dataclass(frozen=True)
class Join:
    table: str
    on: Condition | None = None  # None for comma-style FROM lists


@dataclass(frozen=True)
class OrderKey:
    expr: Union[ColumnRef, FuncCall]
    direction: str | None = None  # ASC | DESC | None


@dataclass(frozen=True)
class SelectCore:
    items: tuple[SelectItem, ...]
    distinct: bool = False
    from_table: str | None = None
    joins: tuple[Join, ...] = ()
    where: Condition | None = None
    group_by: tuple[ColumnRef, ...] = ()
    having: Condition | None = None
    order_by: tuple[OrderKey, ...] = ()
    limit: int | None = None

    def tables(self) -> tuple[str, ...]:
        names = []
        if self.from_table:
            names.append(self.from_table)
        names.extend(j.table for j in self.joins)
        return tuple(names)

    def with_(self, **changes) -> "SelectCore":
        return replace(self, **changes)


@dataclass(frozen=True)
class Compound:
    op: str  # one of COMPOUND_OPS
    left: "Query"
    right: "Query"


Query = Union[SelectCore, Compound]


def iter_conjuncts(cond: Condition | None):
    """Yield the top-level AND conjuncts of a condition tree."""
    if cond is None:
        return
    if isinstance(cond, BoolOp) and cond.op == "AND":
        yield from iter_conjuncts(cond.left)
        yield from iter_conjuncts(cond.right)
    else:
        yield cond


def conjoin(conds: list[Condition]) -> Condition | None:
    """Left-fold a list of conditions back into an AND chain."""
    if not conds:
        return None
    out = conds[0]
    for c in conds[1:]:
        out = BoolOp("AND", out, c)
    return out
