"""Recombine (possibly edited) clauses into one valid query.

Three rewriting rules keep the result syntactically sound: FROM is rewritten
to join in referenced-but-missing tables along foreign keys, duplicate SELECT /
WHERE / HAVING clauses at one level are merged, and only the first of several
ORDER BY or GROUP BY clauses survives.
"""

from __future__ import annotations

from collections import deque
from dataclasses import replace as dc_replace

from .ast_nodes import (
    Between,
    BoolOp,
    ColumnRef,
    Comparison,
    Compound,
    Condition,
    FuncCall,
    Join,
    Literal,
    Not,
    Query,
    SelectCore,
    Star,
    conjoin,
    iter_conjuncts,
)
from .decompose import (
    Block,
    Clause,
    ClauseKind,
    ClauseTree,
    CompoundTree,
    CoreTree,
    FromClause,
    GroupClause,
    HavingClause,
    OrderClause,
    SelectClause,
    WhereClause,
)
from .errors import ComposeError
from .render import render_expr
from .schema import SchemaCatalog


def merge_same_level(clauses: list[Clause]) -> list[Clause]:
    """Merge duplicate SELECT/WHERE/HAVING clauses at one level: SELECT lists
    concatenate (order kept, duplicates dropped), conditions conjoin with AND.
    Duplicate FROM clauses union their table lists."""
    out: list[Clause] = []
    first_at: dict[type, int] = {}

    def merge_select(a: SelectClause, b: SelectClause) -> SelectClause:
        seen = {render_expr(x).lower() for x in a.items}
        items = list(a.items)
        for x in b.items:
            key = render_expr(x).lower()
            if key not in seen:
                seen.add(key)
                items.append(x)
        return SelectClause(tuple(items), a.distinct or b.distinct)

    def merge_from(a: FromClause, b: FromClause) -> FromClause:
        tables = {t.lower() for t in a.tables()}
        joins = list(a.joins)
        incoming = ([(b.from_table, None)] if b.from_table else []) \
            + [(j.table, j.on) for j in b.joins]
        for table, on in incoming:
            if table.lower() not in tables:
                tables.add(table.lower())
                joins.append(Join(table, on))
        return FromClause(a.from_table if a.from_table else b.from_table, tuple(joins))

    for clause in clauses:
        key = type(clause)
        if key in (SelectClause, FromClause, WhereClause, HavingClause) and key in first_at:
            i = first_at[key]
            prev = out[i]
            if key is SelectClause:
                out[i] = merge_select(prev, clause)
            elif key is FromClause:
                out[i] = merge_from(prev, clause)
            elif key is WhereClause:
                out[i] = WhereClause(BoolOp("AND", prev.condition, clause.condition))
            else:
                out[i] = HavingClause(BoolOp("AND", prev.condition, clause.condition))
            continue
        first_at.setdefault(key, len(out))
        out.append(clause)
    return out


def dedupe_order_group(clauses: list[Clause]) -> list[Clause]:
    """Keep only the first ORDER BY and the first GROUP BY clause."""
    out: list[Clause] = []
    seen_order = seen_group = False
    for clause in clauses:
        if isinstance(clause, OrderClause):
            if seen_order:
                continue
            seen_order = True
        elif isinstance(clause, GroupClause):
            if seen_group:
                continue
            seen_group = True
        out.append(clause)
    return out


# -- foreign-key join repair -------------------------------------------------


def _fk_graph(schema: SchemaCatalog) -> dict[str, list[tuple[str, Condition]]]:
    """Undirected adjacency: table -> [(neighbor, ON condition)], in schema
    declaration order."""
    graph: dict[str, list[tuple[str, Condition]]] = {t.name: [] for t in schema.tables}
    for fk in schema.foreign_keys:
        on = Comparison(
            ColumnRef(fk.from_column, fk.from_table), "=",
            ColumnRef(fk.to_column, fk.to_table),
        )
        graph[fk.from_table].append((fk.to_table, on))
        graph[fk.to_table].append((fk.from_table, on))
    return graph


def _shortest_join_path(schema: SchemaCatalog, sources: list[str],
                        target: str) -> list[tuple[str, Condition]] | None:
    """BFS over the fk graph; returns [(table to join, ON condition), ...]."""
    graph = _fk_graph(schema)
    seen = {s.lower() for s in sources}
    queue: deque[tuple[str, list[tuple[str, Condition]]]] = deque()
    for s in sources:
        queue.append((schema.canonical_table(s), []))
    while queue:
        table, path = queue.popleft()
        for neighbor, on in graph.get(table, []):
            if neighbor.lower() in seen:
                continue
            new_path = path + [(neighbor, on)]
            if neighbor.lower() == target.lower():
                return new_path
            seen.add(neighbor.lower())
            queue.append((neighbor, new_path))
    return None


def _columns_in_condition(cond: Condition | None):
    if cond is None:
        return
    if isinstance(cond, BoolOp):
        yield from _columns_in_condition(cond.left)
        yield from _columns_in_condition(cond.right)
    elif isinstance(cond, Not):
        yield from _columns_in_condition(cond.operand)
    elif isinstance(cond, Between):
        for x in (cond.left, cond.low, cond.high):
            yield from _columns_in_operand(x)
    elif isinstance(cond, Comparison):
        yield from _columns_in_operand(cond.left)
        if not isinstance(cond.right, (SelectCore, Compound)):
            yield from _columns_in_operand(cond.right)


def _columns_in_operand(x):
    if isinstance(x, ColumnRef):
        yield x
    elif isinstance(x, FuncCall) and isinstance(x.arg, ColumnRef):
        yield x.arg


def _core_columns(core: SelectCore):
    for item in core.items:
        yield from _columns_in_operand(item)
    yield from _columns_in_condition(core.where)
    for key in core.group_by:
        yield key
    yield from _columns_in_condition(core.having)
    for key in core.order_by:
        yield from _columns_in_operand(key.expr)
    for join in core.joins:
        yield from _columns_in_condition(join.on)


def _required_tables(core: SelectCore, schema: SchemaCatalog) -> list[str]:
    """Tables the core references, in first-mention order."""
    current = {t.lower() for t in core.tables()}
    needed: list[str] = []

    def add(name: str) -> None:
        canon = schema.canonical_table(name)
        if canon.lower() not in current and canon not in needed:
            needed.append(canon)

    for ref in _core_columns(core):
        if ref.table is not None:
            add(ref.table)
        else:
            owners = [t.name for t in schema.tables if t.has_column(ref.column)]
            if any(o.lower() in current for o in owners):
                continue
            if len(owners) == 1:
                add(owners[0])
            elif owners:
                # ambiguous unqualified column: prefer the owner closest to the
                # current FROM set, then declaration order
                sources = [t for t in core.tables()] or [owners[0]]
                best = None
                for o in owners:
                    path = _shortest_join_path(schema, sources, o)
                    cost = len(path) if path is not None else 999
                    if best is None or cost < best[0]:
                        best = (cost, o)
                add(best[1])
    return needed


def rewrite_from_join(ast: Query, schema: SchemaCatalog) -> Query:
    """Join referenced-but-missing tables into FROM along foreign keys."""
    if isinstance(ast, Compound):
        return Compound(ast.op, rewrite_from_join(ast.left, schema),
                        rewrite_from_join(ast.right, schema))
    core = ast

    def fix_sub(cond: Condition | None) -> Condition | None:
        if cond is None:
            return None
        if isinstance(cond, BoolOp):
            return BoolOp(cond.op, fix_sub(cond.left), fix_sub(cond.right))
        if isinstance(cond, Not):
            return Not(fix_sub(cond.operand))
        if isinstance(cond, Comparison) and isinstance(cond.right, (SelectCore, Compound)):
            return Comparison(cond.left, cond.op, rewrite_from_join(cond.right, schema))
        return cond

    core = core.with_(where=fix_sub(core.where), having=fix_sub(core.having))

    needed = _required_tables(core, schema)
    if not needed:
        return core
    from_table = core.from_table
    joins = list(core.joins)
    if from_table is None and not joins:
        from_table = needed.pop(0)
    for target in needed:
        sources = ([from_table] if from_table else []) + [j.table for j in joins]
        path = _shortest_join_path(schema, sources, target)
        if path is None:
            raise ComposeError(
                f"no foreign-key path joins table {target!r} with "
                f"{', '.join(repr(s) for s in sources)}")
        for table, on in path:
            if table.lower() in {t.lower() for t in ([from_table] if from_table else []) + [j.table for j in joins]}:
                continue
            joins.append(Join(table, on))
    return core.with_(from_table=from_table, joins=tuple(joins))


# -- composition ---------------------------------------------------------------


def _compose_core(tree: CoreTree, schema: SchemaCatalog) -> SelectCore:
    clauses = dedupe_order_group(merge_same_level(tree.clauses))

    select = next((c for c in clauses if isinstance(c, SelectClause)), None)
    if select is None:
        raise ComposeError("query has no SELECT clause; it must return something")
    from_clause = next((c for c in clauses if isinstance(c, FromClause)), None)
    where = next((c for c in clauses if isinstance(c, WhereClause)), None)
    group = next((c for c in clauses if isinstance(c, GroupClause)), None)
    having = next((c for c in clauses if isinstance(c, HavingClause)), None)
    order = next((c for c in clauses if isinstance(c, OrderClause)), None)

    where_conjuncts = list(iter_conjuncts(where.condition if where else None))
    having_conjuncts = list(iter_conjuncts(having.condition if having else None))
    for block in tree.blocks:
        sub = compose(block.child, schema)
        conjunct = Comparison(block.left, block.op, sub)
        if block.origin == ClauseKind.HAVING:
            having_conjuncts.append(conjunct)
        else:
            where_conjuncts.append(conjunct)

    core = SelectCore(
        items=select.items,
        distinct=select.distinct,
        from_table=from_clause.from_table if from_clause else None,
        joins=from_clause.joins if from_clause else (),
        where=conjoin(where_conjuncts),
        group_by=group.keys if group else (),
        having=conjoin(having_conjuncts),
        order_by=order.keys if order else (),
        limit=order.limit if order else None,
    )
    return rewrite_from_join(core, schema)


def compose(tree: ClauseTree, schema: SchemaCatalog) -> Query:
    """Build a single valid query from a clause tree, applying the rewrite
    rules. Raises ``ComposeError`` for an empty tree or unjoinable tables."""
    if tree is None:
        raise ComposeError("empty clause tree")
    if isinstance(tree, CompoundTree):
        return Compound(tree.op, compose(tree.left, schema), compose(tree.right, schema))
    if not tree.clauses:
        raise ComposeError("empty clause tree")
    return _compose_core(tree, schema)
