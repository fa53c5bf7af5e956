"""Deterministic SQL text for an AST: canonical keyword casing, schema-cased
identifiers, single-quoted strings, clauses in syntactic order."""

from __future__ import annotations

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


def render_sql(ast: Query) -> str:
    if isinstance(ast, Compound):
        return f"({render_sql(ast.left)}) {ast.op} ({render_sql(ast.right)})"
    return _render_core(ast)


def _render_core(core: SelectCore) -> str:
    parts = ["SELECT "]
    if core.distinct:
        parts.append("DISTINCT ")
    parts.append(", ".join(render_expr(x) for x in core.items))
    if core.from_table:
        parts.append(f" FROM {core.from_table}")
        for join in core.joins:
            if join.on is None:
                parts.append(f", {join.table}")
            else:
                parts.append(f" JOIN {join.table} ON {render_condition(join.on)}")
    if core.where is not None:
        parts.append(f" WHERE {render_condition(core.where)}")
    if core.group_by:
        parts.append(" GROUP BY " + ", ".join(render_expr(g) for g in core.group_by))
    if core.having is not None:
        parts.append(f" HAVING {render_condition(core.having)}")
    if core.order_by:
        keys = []
        for key in core.order_by:
            text = render_expr(key.expr)
            if key.direction:
                text += f" {key.direction}"
            keys.append(text)
        parts.append(" ORDER BY " + ", ".join(keys))
    if core.limit is not None:
        parts.append(f" LIMIT {core.limit}")
    return "".join(parts)


def render_expr(expr) -> str:
    if isinstance(expr, Star):
        return "*"
    if isinstance(expr, ColumnRef):
        return expr.key()
    if isinstance(expr, FuncCall):
        return f"{expr.func}({render_expr(expr.arg)})"
    if isinstance(expr, Literal):
        return expr.render()
    raise TypeError(f"cannot render {expr!r}")


def render_condition(cond: Condition) -> str:
    if isinstance(cond, Comparison):
        if isinstance(cond.right, (SelectCore, Compound)):
            return f"{render_expr(cond.left)} {cond.op} ({render_sql(cond.right)})"
        return f"{render_expr(cond.left)} {cond.op} {render_expr(cond.right)}"
    if isinstance(cond, Between):
        return (f"{render_expr(cond.left)} BETWEEN "
                f"{render_expr(cond.low)} AND {render_expr(cond.high)}")
    if isinstance(cond, BoolOp):
        left = render_condition(cond.left)
        right = render_condition(cond.right)
        # parenthesize an OR child under AND so precedence survives re-parsing
        if cond.op == "AND":
            if isinstance(cond.left, BoolOp) and cond.left.op == "OR":
                left = f"({left})"
            if isinstance(cond.right, BoolOp) and cond.right.op == "OR":
                right = f"({right})"
        return f"{left} {cond.op} {right}"
    if isinstance(cond, Not):
        inner = render_condition(cond.operand)
        if isinstance(cond.operand, BoolOp):
            inner = f"({inner})"
        return f"NOT {inner}"
    raise TypeError(f"cannot render condition {cond!r}")
