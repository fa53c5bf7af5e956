"""Split a query AST into the six clause kinds and order them for execution.

Each select core yields at most one clause per kind; FROM and all of its
JOIN...ON segments form a single clause, and a LIMIT is absorbed into the
ORDER BY clause (a bare LIMIT becomes its own final step). INTERSECT / UNION /
EXCEPT compounds and IN / NOT IN subqueries become child trees presented as
first-query / second-query blocks; a scalar-comparison subquery stays inline in
its condition when it is a bare single-table SELECT...FROM, and is lifted to a
block otherwise.

Clause ownership is positional: a clause lives in exactly one ``CoreTree`` and
step slots address it by (path, kind).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

from .ast_nodes import (
    ColumnRef,
    Comparison,
    Compound,
    Condition,
    Join,
    MEMBERSHIP_OPS,
    OrderKey,
    Query,
    SelectCore,
    SelectItem,
    conjoin,
    iter_conjuncts,
)


class ClauseKind(enum.Enum):
    FROM_JOIN_ON = "FROM_JOIN_ON"
    WHERE = "WHERE"
    GROUP_BY = "GROUP_BY"
    HAVING = "HAVING"
    SELECT = "SELECT"
    ORDER_BY = "ORDER_BY"


# evaluation order within one select core
EXECUTION_ORDER = (
    ClauseKind.FROM_JOIN_ON,
    ClauseKind.WHERE,
    ClauseKind.GROUP_BY,
    ClauseKind.HAVING,
    ClauseKind.SELECT,
    ClauseKind.ORDER_BY,
)

# order used when rendering SQL text
SYNTACTIC_ORDER = (
    ClauseKind.SELECT,
    ClauseKind.FROM_JOIN_ON,
    ClauseKind.WHERE,
    ClauseKind.GROUP_BY,
    ClauseKind.HAVING,
    ClauseKind.ORDER_BY,
)


@dataclass(frozen=True)
class SelectClause:
    items: tuple[SelectItem, ...]
    distinct: bool = False
    kind = ClauseKind.SELECT


@dataclass(frozen=True)
class FromClause:
    from_table: str | None
    joins: tuple[Join, ...] = ()
    kind = ClauseKind.FROM_JOIN_ON

    def tables(self) -> tuple[str, ...]:
        names = [self.from_table] if self.from_table else []
        names.extend(j.table for j in self.joins)
        return tuple(names)


@dataclass(frozen=True)
class WhereClause:
    condition: Condition
    kind = ClauseKind.WHERE


@dataclass(frozen=True)
class GroupClause:
    keys: tuple[ColumnRef, ...]
    kind = ClauseKind.GROUP_BY


@dataclass(frozen=True)
class HavingClause:
    condition: Condition
    kind = ClauseKind.HAVING


@dataclass(frozen=True)
class OrderClause:
    keys: tuple[OrderKey, ...] = ()
    limit: int | None = None
    kind = ClauseKind.ORDER_BY


Clause = Union[SelectClause, FromClause, WhereClause, GroupClause, HavingClause, OrderClause]


@dataclass
class Block:
    """A lifted subquery conjunct: ``left op (child)`` pulled out of a condition."""

    origin: ClauseKind  # WHERE or HAVING
    left: object  # operand of the comparison
    op: str  # IN, NOT IN, or a comparison operator
    child: "ClauseTree"


@dataclass
class CoreTree:
    # ordered clause list; decompose emits one clause per kind but user edits
    # may insert duplicates, which the composer later merges/dedupes
    clauses: list[Clause] = field(default_factory=list)
    blocks: list[Block] = field(default_factory=list)

    def first(self, kind: ClauseKind) -> Clause | None:
        for c in self.clauses:
            if c.kind == kind:
                return c
        return None

    def of_kind(self, kind: ClauseKind) -> list[Clause]:
        return [c for c in self.clauses if c.kind == kind]


@dataclass
class CompoundTree:
    op: str
    left: "ClauseTree"
    right: "ClauseTree"


ClauseTree = Union[CoreTree, CompoundTree]


def _subquery_is_inline(q: Query) -> bool:
    """Bare single-table single-item SELECT...FROM: explained inline within
    its parent step. Anything else (DISTINCT included) gets its own block so
    the explanation stays a faithful rendering of the query."""
    return (
        isinstance(q, SelectCore)
        and len(q.items) == 1
        and not q.distinct
        and q.from_table is not None
        and not q.joins
        and q.where is None
        and not q.group_by
        and q.having is None
        and not q.order_by
        and q.limit is None
    )


def _lift_blocks(cond: Condition | None, origin: ClauseKind,
                 blocks: list[Block]) -> Condition | None:
    """Pull subquery conjuncts out of a condition, appending Block entries."""
    residual = []
    for conj in iter_conjuncts(cond):
        if isinstance(conj, Comparison) and isinstance(conj.right, (SelectCore, Compound)):
            always_lift = conj.op in MEMBERSHIP_OPS
            if always_lift or not _subquery_is_inline(conj.right):
                blocks.append(Block(origin, conj.left, conj.op, decompose(conj.right)))
                continue
        residual.append(conj)
    return conjoin(residual)


def decompose(ast: Query) -> ClauseTree:
    if isinstance(ast, Compound):
        return CompoundTree(ast.op, decompose(ast.left), decompose(ast.right))

    core = ast
    tree = CoreTree()
    if core.from_table or core.joins:
        tree.clauses.append(FromClause(core.from_table, core.joins))

    where = _lift_blocks(core.where, ClauseKind.WHERE, tree.blocks)
    if where is not None:
        tree.clauses.append(WhereClause(where))

    if core.group_by:
        tree.clauses.append(GroupClause(core.group_by))

    having = _lift_blocks(core.having, ClauseKind.HAVING, tree.blocks)
    if having is not None:
        tree.clauses.append(HavingClause(having))

    tree.clauses.append(SelectClause(core.items, core.distinct))

    if core.order_by or core.limit is not None:
        tree.clauses.append(OrderClause(core.order_by, core.limit))

    return tree


# -- step slots ----------------------------------------------------------


@dataclass(frozen=True)
class StepSlot:
    """One future explanation step: a clause, a query marker, or a combine line.

    ``path`` addresses the owning tree node: ("L"|"R") descends a compound,
    ("B", i) descends into block i of a core.
    """

    role: str  # "clause" | "marker" | "combine"
    path: tuple
    kind: ClauseKind | None = None
    clause: Clause | None = None
    ordinal: int | None = None  # marker: which query this slot introduces
    combine_op: str | None = None  # compound op, or block membership/comparison op
    block_index: int | None = None

    def is_structural(self) -> bool:
        return self.role != "clause"


_ORDINALS = ("first", "second", "third", "fourth", "fifth",
             "sixth", "seventh", "eighth", "ninth", "tenth")


def ordinal_word(n: int) -> str:
    return _ORDINALS[n] if n < len(_ORDINALS) else f"{n + 1}th"


def execution_order(tree: ClauseTree, path: tuple = ()) -> list[StepSlot]:
    """Flatten a clause tree into the ordered list of explanation step slots."""
    slots: list[StepSlot] = []
    if isinstance(tree, CompoundTree):
        slots.append(StepSlot("marker", path, ordinal=0))
        slots.extend(execution_order(tree.left, path + ("L",)))
        slots.append(StepSlot("marker", path, ordinal=1))
        slots.extend(execution_order(tree.right, path + ("R",)))
        slots.append(StepSlot("combine", path, combine_op=tree.op))
        return slots

    for i, block in enumerate(tree.blocks):
        slots.append(StepSlot("marker", path, ordinal=i, block_index=i))
        slots.extend(execution_order(block.child, path + (("B", i),)))
    if tree.blocks:
        slots.append(StepSlot("marker", path, ordinal=len(tree.blocks)))
    rank = {kind: i for i, kind in enumerate(EXECUTION_ORDER)}
    for clause in sorted(tree.clauses, key=lambda c: rank[c.kind]):
        slots.append(StepSlot("clause", path, kind=clause.kind, clause=clause))
    for i, block in enumerate(tree.blocks):
        slots.append(StepSlot("combine", path, combine_op=block.op, block_index=i,
                              kind=block.origin))
    return slots


def node_at(tree: ClauseTree, path: tuple) -> ClauseTree:
    node = tree
    for part in path:
        if part == "L":
            node = node.left
        elif part == "R":
            node = node.right
        else:
            node = node.blocks[part[1]].child
    return node


def copy_tree(tree: ClauseTree) -> ClauseTree:
    """Structural copy; clause payloads are immutable and shared."""
    if isinstance(tree, CompoundTree):
        return CompoundTree(tree.op, copy_tree(tree.left), copy_tree(tree.right))
    return CoreTree(
        clauses=list(tree.clauses),
        blocks=[Block(b.origin, b.left, b.op, copy_tree(b.child)) for b in tree.blocks],
    )


def max_block_depth(tree: ClauseTree) -> int:
    """Nesting depth of first/second-query presentation blocks."""
    if isinstance(tree, CompoundTree):
        return 1 + max(max_block_depth(tree.left), max_block_depth(tree.right))
    if tree.blocks:
        return 1 + max(max_block_depth(b.child) for b in tree.blocks)
    return 0
