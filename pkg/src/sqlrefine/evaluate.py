"""Semantic equivalence metrics: per-component matching and exact set match,
plus the optional execution-accuracy adapter and report formatting.

Two queries are exact-set-match equivalent when every component matches:
SELECT items, FROM tables, WHERE conjuncts, GROUP BY keys and HAVING conjuncts
compare as order-insensitive sets, ORDER BY compares in order with direction,
LIMIT by value, and compound structure recursively.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass, field

from .ast_nodes import (
    Between,
    BoolOp,
    ColumnRef,
    Comparison,
    Compound,
    Condition,
    FuncCall,
    Literal,
    Not,
    Query,
    SelectCore,
    Star,
)
from .decompose import ClauseKind
from .errors import SqlRefineError
from .render import render_sql
from .schema import SchemaCatalog

COMPONENT_KINDS = tuple(k.value for k in ClauseKind)


@dataclass(frozen=True)
class MatchReport:
    components: dict[str, bool]  # one verdict per clause kind
    structure: bool  # compound operators / nesting shape agree

    @property
    def overall(self) -> bool:
        return self.structure and all(self.components.values())

    def mismatched(self) -> list[str]:
        out = [k for k, ok in self.components.items() if not ok]
        if not self.structure:
            out.append("structure")
        return out


def _owner(ref: ColumnRef, tables: tuple[str, ...], schema: SchemaCatalog) -> str | None:
    if ref.table:
        return ref.table.lower()
    for t in tables:
        table = schema.table(t)
        if table and table.has_column(ref.column):
            return t.lower()
    return None


def _norm_expr(x, tables: tuple[str, ...], schema: SchemaCatalog) -> str:
    if isinstance(x, Star):
        return "*"
    if isinstance(x, ColumnRef):
        owner = _owner(x, tables, schema)
        return f"{owner}.{x.column.lower()}" if owner else x.column.lower()
    if isinstance(x, FuncCall):
        return f"{x.func.lower()}({_norm_expr(x.arg, tables, schema)})"
    if isinstance(x, Literal):
        return x.render().lower() if not x.is_string else f"'{x.value}'"
    raise TypeError(f"cannot normalize {x!r}")


def _norm_condition(c: Condition, tables: tuple[str, ...], schema: SchemaCatalog) -> str:
    if isinstance(c, Comparison):
        if isinstance(c.right, (SelectCore, Compound)):
            right = f"({_norm_query(c.right, schema)})"
        else:
            right = _norm_expr(c.right, tables, schema)
        return f"{_norm_expr(c.left, tables, schema)} {c.op.lower()} {right}"
    if isinstance(c, Between):
        return (f"{_norm_expr(c.left, tables, schema)} between "
                f"{_norm_expr(c.low, tables, schema)} and "
                f"{_norm_expr(c.high, tables, schema)}")
    if isinstance(c, BoolOp):
        return (f"({_norm_condition(c.left, tables, schema)}) {c.op.lower()} "
                f"({_norm_condition(c.right, tables, schema)})")
    if isinstance(c, Not):
        return f"not ({_norm_condition(c.operand, tables, schema)})"
    raise TypeError(f"cannot normalize condition {c!r}")


def _conjunct_set(cond: Condition | None, tables: tuple[str, ...],
                  schema: SchemaCatalog) -> frozenset[str]:
    from .ast_nodes import iter_conjuncts

    return frozenset(_norm_condition(c, tables, schema) for c in iter_conjuncts(cond))


def _core_components(core: SelectCore, schema: SchemaCatalog) -> dict[str, object]:
    tables = core.tables()
    return {
        ClauseKind.SELECT.value: (
            core.distinct,
            frozenset(_norm_expr(x, tables, schema) for x in core.items),
        ),
        ClauseKind.FROM_JOIN_ON.value: frozenset(t.lower() for t in tables),
        ClauseKind.WHERE.value: _conjunct_set(core.where, tables, schema),
        ClauseKind.GROUP_BY.value: frozenset(
            _norm_expr(k, tables, schema) for k in core.group_by),
        ClauseKind.HAVING.value: _conjunct_set(core.having, tables, schema),
        ClauseKind.ORDER_BY.value: (
            tuple((_norm_expr(k.expr, tables, schema), k.direction or "ASC")
                  for k in core.order_by),
            core.limit,
        ),
    }


def _norm_query(q: Query, schema: SchemaCatalog):
    """Hashable canonical form of a whole query, for nested comparisons."""
    if isinstance(q, Compound):
        return ("compound", q.op, _norm_query(q.left, schema), _norm_query(q.right, schema))
    comp = _core_components(q, schema)
    return ("core",) + tuple(sorted((k, repr(v)) for k, v in comp.items()))


def _pair_cores(pred: Query, gold: Query,
                pairs: list[tuple[SelectCore, SelectCore]]) -> bool:
    """Pair select cores positionally; False when the compound shapes differ."""
    if isinstance(pred, Compound) and isinstance(gold, Compound):
        if pred.op != gold.op:
            return False
        left_ok = _pair_cores(pred.left, gold.left, pairs)
        right_ok = _pair_cores(pred.right, gold.right, pairs)
        return left_ok and right_ok
    if isinstance(pred, SelectCore) and isinstance(gold, SelectCore):
        pairs.append((pred, gold))
        return True
    return False


def _check_same_schema(q: Query, schema: SchemaCatalog) -> None:
    from .errors import ResolutionError

    if isinstance(q, Compound):
        _check_same_schema(q.left, schema)
        _check_same_schema(q.right, schema)
        return
    for t in q.tables():
        if schema.table(t) is None:
            raise ResolutionError(
                f"query references table {t!r} outside schema {schema.schema_id!r}", t)


def component_match(pred: Query, gold: Query, schema: SchemaCatalog) -> MatchReport:
    """Per clause kind, order-insensitive comparison of normalized components;
    compound operator and child equivalence checked recursively. Both queries
    must be valid against the same schema."""
    _check_same_schema(pred, schema)
    _check_same_schema(gold, schema)
    pairs: list[tuple[SelectCore, SelectCore]] = []
    structure = _pair_cores(pred, gold, pairs)
    components = {k: True for k in COMPONENT_KINDS}
    if not structure:
        components = {k: False for k in COMPONENT_KINDS}
        return MatchReport(components, False)
    for p, g in pairs:
        pc = _core_components(p, schema)
        gc = _core_components(g, schema)
        for kind in COMPONENT_KINDS:
            if pc[kind] != gc[kind]:
                components[kind] = False
    return MatchReport(components, True)


def exact_set_match(pred: Query, gold: Query, schema: SchemaCatalog) -> bool:
    return component_match(pred, gold, schema).overall


# -- execution accuracy (optional external engine) ---------------------------


class ExecutionChecker:
    """Compares query results by running them on a SQLite database file.

    Result sets compare as multisets, except order-sensitively when the
    query carries an ORDER BY.
    """

    def __init__(self, db_path: str):
        self.db_path = db_path

    def run(self, sql: str) -> list[tuple]:
        conn = sqlite3.connect(self.db_path)
        try:
            cur = conn.execute(sql)
            return [tuple(row) for row in cur.fetchall()]
        finally:
            conn.close()

    def equivalent(self, pred: Query, gold: Query) -> bool:
        try:
            pred_rows = self.run(render_sql(pred))
            gold_rows = self.run(render_sql(gold))
        except sqlite3.Error as exc:
            raise SqlRefineError(f"execution failed: {exc}") from None
        ordered = isinstance(gold, SelectCore) and bool(gold.order_by)
        if ordered:
            return pred_rows == gold_rows
        return sorted(map(repr, pred_rows)) == sorted(map(repr, gold_rows))


# -- accuracy report -----------------------------------------------------------

DIFFICULTY_TIERS = ("easy", "medium", "hard", "extra")


@dataclass
class AccuracyReport:
    per_tier: dict[str, tuple[int, int]] = field(default_factory=dict)  # tier -> (correct, total)
    exec_per_tier: dict[str, tuple[int, int]] | None = None
    failures: list[dict] = field(default_factory=list)

    @staticmethod
    def _rate(pair: tuple[int, int]) -> float:
        correct, total = pair
        return correct / total if total else 0.0

    def overall(self) -> float:
        total = sum(t for _, t in self.per_tier.values())
        correct = sum(c for c, _ in self.per_tier.values())
        return correct / total if total else 0.0

    def to_dict(self) -> dict:
        out = {
            "tiers": {
                tier: {
                    "correct": c, "total": t,
                    "accuracy": self._rate((c, t)),
                }
                for tier, (c, t) in sorted(self.per_tier.items())
            },
            "overall": self.overall(),
            "failures": self.failures,
        }
        if self.exec_per_tier is not None:
            total = sum(t for _, t in self.exec_per_tier.values())
            correct = sum(c for c, _ in self.exec_per_tier.values())
            out["execution"] = {
                "tiers": {
                    tier: {"correct": c, "total": t, "accuracy": self._rate((c, t))}
                    for tier, (c, t) in sorted(self.exec_per_tier.items())
                },
                "overall": correct / total if total else 0.0,
            }
        return out

    def to_table(self) -> str:
        tiers = [t for t in DIFFICULTY_TIERS if t in self.per_tier]
        tiers += sorted(set(self.per_tier) - set(tiers))
        headers = ["tier", "correct", "total", "accuracy"]
        rows = [[tier, str(self.per_tier[tier][0]), str(self.per_tier[tier][1]),
                 f"{self._rate(self.per_tier[tier]):.3f}"] for tier in tiers]
        total = sum(t for _, t in self.per_tier.values())
        correct = sum(c for c, _ in self.per_tier.values())
        rows.append(["all", str(correct), str(total), f"{self.overall():.3f}"])
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        for r in rows:
            lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
        return "\n".join(lines)

    def record(self, tier: str, correct: bool) -> None:
        c, t = self.per_tier.get(tier, (0, 0))
        self.per_tier[tier] = (c + (1 if correct else 0), t + 1)

    def record_exec(self, tier: str, correct: bool) -> None:
        if self.exec_per_tier is None:
            self.exec_per_tier = {}
        c, t = self.exec_per_tier.get(tier, (0, 0))
        self.exec_per_tier[tier] = (c + (1 if correct else 0), t + 1)
