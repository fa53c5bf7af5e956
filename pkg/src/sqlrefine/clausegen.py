"""Regenerate a whole clause from an edited explanation sentence.

The built-in rule-based generator inverts the translation rules: it chunks the
text (binding schema entities), maps synonyms back to template words, infers
the clause kind from cue phrases, and parses the normalized stream into a
clause AST. A remote generator speaking HTTP+JSON can be plugged in instead;
its SQL output is parsed and validated before being accepted.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .ast_nodes import (
    Between,
    BoolOp,
    ColumnRef,
    Comparison,
    Condition,
    FuncCall,
    Join,
    Literal,
    Not,
    OrderKey,
    SelectCore,
    Star,
    conjoin,
    iter_conjuncts,
)
from .decompose import (
    Clause,
    ClauseKind,
    FromClause,
    GroupClause,
    HavingClause,
    OrderClause,
    SelectClause,
    WhereClause,
)
from .errors import GenerationError, RemoteBackendError, SqlSyntaxError
from .editing import Chunk, chunk as chunk_text
from .render import render_condition, render_expr
from .schema import SchemaCatalog
from .synonyms import normalize_text

AGG_BY_PHRASE = {
    "the number of": "COUNT",
    "the average value of": "AVG",
    "the maximum value of": "MAX",
    "the minimum value of": "MIN",
    "the sum value of": "SUM",
}

# canonical operator phrases, longest first so prefixes never shadow
OP_BY_PHRASE = [
    ("is greater than or equal to", ">="),
    ("is less than or equal to", "<="),
    ("is not in the form of", "NOT LIKE"),
    ("is in the form of", "LIKE"),
    ("is greater than", ">"),
    ("is less than", "<"),
    ("is not in", "NOT IN"),
    ("is not", "!="),
    ("is in", "IN"),
    ("is", "="),
]


@dataclass
class GenerationContext:
    schema: SchemaCatalog
    siblings: dict[ClauseKind, Clause] = field(default_factory=dict)
    position: int = 0
    kind_hint: ClauseKind | None = None

    def tables(self) -> tuple[str, ...]:
        from_clause = self.siblings.get(ClauseKind.FROM_JOIN_ON)
        if isinstance(from_clause, FromClause):
            return from_clause.tables()
        return ()


# -- element stream --------------------------------------------------------


def _split_punct_tail(text: str) -> tuple[str, list[str]]:
    tail = []
    while text and text[-1] in ",.;:":
        tail.insert(0, text[-1])
        text = text[:-1]
    return text, tail


def _elements(text: str, schema: SchemaCatalog,
              context_tables: tuple[str, ...]) -> list[object]:
    """Chunk the text, then normalize the non-entity runs to template words.

    Returns a flat list mixing lowercase words, punctuation marks and entity
    ``Chunk`` atoms; punctuation attached to a chunk becomes its own element.
    """
    from dataclasses import replace as dc_replace

    chunks = chunk_text(text, schema, context_tables=context_tables)
    out: list[object] = []
    run: list[str] = []
    at_start = True

    def flush(run_start: bool):
        nonlocal run
        if run:
            spaced = " ".join(run)
            for mark in ",.;:":
                spaced = spaced.replace(mark, f" {mark} ")
            normalized = normalize_text(spaced, at_sentence_start=run_start)
            out.extend(normalized.lower().split())
            run = []

    for c in chunks:
        if c.cls == "other":
            run.append(c.text)
        else:
            flush(at_start)
            at_start = False
            bare, tail = _split_punct_tail(c.text)
            out.append(dc_replace(c, text=bare))
            out.extend(tail)
    flush(at_start)
    return out


class _Stream:
    def __init__(self, elements: list[object]):
        self.elements = elements
        self.i = 0

    def eof(self) -> bool:
        return self.i >= len(self.elements)

    def peek_words(self, phrase: str) -> bool:
        words = phrase.split()
        for k, w in enumerate(words):
            idx = self.i + k
            if idx >= len(self.elements):
                return False
            e = self.elements[idx]
            if not isinstance(e, str) or e.strip(",.;:") != w:
                return False
        return True

    def accept_words(self, phrase: str) -> bool:
        if self.peek_words(phrase):
            self.i += len(phrase.split())
            return True
        return False

    def accept_article(self) -> None:
        while not self.eof() and isinstance(self.elements[self.i], str) \
                and self.elements[self.i].strip(",.;:") in ("the", "a", "an"):
            self.i += 1

    def take_entity(self, *classes: str) -> Chunk | None:
        if not self.eof():
            e = self.elements[self.i]
            if isinstance(e, Chunk) and e.cls in classes:
                self.i += 1
                return e
        return None

    def accept_list_separator(self) -> bool:
        """A "," or "and" between list items (but not "and table"/limit tails)."""
        e = self.current()
        if isinstance(e, str) and e == ",":
            self.i += 1
            self.accept_words("and")
            return True
        if self.peek_words("and table"):
            return False
        if self.peek_words("and return the first record") or self.peek_words("and return the top"):
            return False
        return self.accept_words("and")

    def current(self) -> object:
        return None if self.eof() else self.elements[self.i]


def _column_from_chunk(c: Chunk, qualifier: str | None) -> ColumnRef:
    if c.binding and "." in c.binding:
        owner, col = c.binding.split(".", 1)
    else:
        owner, col = None, (c.binding or c.text)
    return ColumnRef(col, qualifier if qualifier else None)


def _parse_column(s: _Stream) -> ColumnRef | None:
    s.accept_article()
    ent = s.take_entity("column")
    if ent is None:
        return None
    qualifier = None
    save = s.i
    if s.accept_words("of"):
        table = s.take_entity("table")
        if table is None:
            s.i = save
        else:
            qualifier = table.binding or table.text
    return _column_from_chunk(ent, qualifier)


def _parse_item(s: _Stream):
    """One select item / operand head: *, aggregate, or column."""
    if s.accept_words("all the records"):
        return Star()
    s.accept_article()
    if s.accept_words("number of records"):
        return FuncCall("COUNT", Star())
    for phrase, func in AGG_BY_PHRASE.items():
        bare = phrase[4:]  # without the leading "the "
        if s.accept_words(bare):
            col = _parse_column(s)
            if col is None:
                raise GenerationError(f"missing column after {phrase!r}")
            return FuncCall(func, col)
    ent = s.take_entity("column")
    if ent is not None:
        qualifier = None
        save = s.i
        if s.accept_words("of"):
            table = s.take_entity("table")
            if table is None:
                s.i = save
            else:
                qualifier = table.binding or table.text
        return _column_from_chunk(ent, qualifier)
    return None


def _literal_from(ent: Chunk) -> Literal:
    raw = ent.text.strip(",.;:")
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return Literal(raw[1:-1], True)
    lex = ent.binding or raw
    if "." in lex:
        return Literal(float(lex), False, lex)
    return Literal(int(lex), False, lex)


def _parse_operand(s: _Stream, schema: SchemaCatalog):
    ent = s.take_entity("literal")
    if ent is not None:
        return _literal_from(ent)
    item = _parse_item(s)
    if item is None:
        raise GenerationError(f"expected a column, value or aggregate near {s.current()!r}")
    return item


def _parse_rhs(s: _Stream, schema: SchemaCatalog):
    """Comparison right side: literal, column/aggregate, or inline subquery
    written as "[distinct] {item} in table {T} [where {cond}]". A trailing
    where-tail binds greedily to the subquery."""
    ent = s.take_entity("literal")
    if ent is not None:
        return _literal_from(ent)
    s.accept_article()
    distinct = s.accept_words("distinct")
    item = _parse_item(s)
    if item is None:
        raise GenerationError(f"expected a comparison operand near {s.current()!r}")
    if s.peek_words("in table"):
        s.accept_words("in table")
        table = s.take_entity("table")
        if table is None:
            raise GenerationError("expected a table name after 'in table'")
        where = None
        if s.accept_words("where"):
            where = _parse_condition(s, schema)
        return SelectCore(items=(item,), distinct=distinct,
                          from_table=table.binding or table.text, where=where)
    if distinct:
        raise GenerationError("'distinct' only applies to a subquery operand")
    return item


def _parse_comparison(s: _Stream, schema: SchemaCatalog) -> Condition:
    if s.accept_words("not"):
        return Not(_parse_comparison(s, schema))
    left = _parse_operand(s, schema)
    if s.accept_words("is between"):
        low = _parse_operand(s, schema)
        if not s.accept_words("and"):
            raise GenerationError("expected 'and' between range bounds")
        high = _parse_operand(s, schema)
        return Between(left, low, high)
    for phrase, op in OP_BY_PHRASE:
        if s.accept_words(phrase):
            right = _parse_rhs(s, schema)
            return Comparison(left, op, right)
    raise GenerationError(f"expected a comparison phrase near {s.current()!r}")


def _parse_condition(s: _Stream, schema: SchemaCatalog) -> Condition:
    node = _parse_and(s, schema)
    while s.accept_words("or"):
        node = BoolOp("OR", node, _parse_and(s, schema))
    return node


def _parse_and(s: _Stream, schema: SchemaCatalog) -> Condition:
    node = _parse_comparison(s, schema)
    while s.peek_words("and") and not s.peek_words("and table"):
        s.accept_words("and")
        node = BoolOp("AND", node, _parse_comparison(s, schema))
    return node


def _parse_item_list(s: _Stream) -> tuple[list, bool]:
    distinct = False
    items = []
    s.accept_article()
    if s.accept_words("distinct"):
        distinct = True
    first = _parse_item(s)
    if first is None:
        raise GenerationError(f"expected a column or aggregate near {s.current()!r}")
    items.append(first)
    while s.accept_list_separator():
        nxt = _parse_item(s)
        if nxt is None:
            raise GenerationError(f"expected a column or aggregate near {s.current()!r}")
        items.append(nxt)
    return items, distinct


def _parse_limit_tail(s: _Stream) -> int | None:
    if s.accept_words("return the first record"):
        return 1
    if s.accept_words("return the top"):
        ent = s.take_entity("literal")
        if ent is None:
            raise GenerationError("expected a count after 'return the top'")
        lit = _literal_from(ent)
        if lit.is_string or not isinstance(lit.value, int) or lit.value <= 0:
            raise GenerationError("record count must be a positive integer")
        s.accept_words("records")
        return lit.value
    return None


# -- kind inference ----------------------------------------------------------


def infer_clause_type(text: str, schema: SchemaCatalog | None = None,
                      context_tables: tuple[str, ...] = (),
                      hint: ClauseKind | None = None) -> ClauseKind:
    """Classify a step sentence into a clause kind by cue phrases."""
    if schema is not None:
        elements = _elements(text, schema, context_tables)
        words = " ".join(e if isinstance(e, str) else "\x00" for e in elements)
    else:
        words = normalize_text(text).lower()
    words = " " + words.strip() + " "

    if words.startswith(" in table"):
        return ClauseKind.FROM_JOIN_ON
    if " keep the groups where " in words:
        return ClauseKind.HAVING
    if words.startswith(" keep the records where"):
        return ClauseKind.WHERE
    if words.startswith(" group"):
        return ClauseKind.GROUP_BY
    if words.startswith(" sort"):
        return ClauseKind.ORDER_BY
    if words.startswith(" return the first record") or words.startswith(" return the top"):
        return ClauseKind.ORDER_BY
    if words.startswith(" return"):
        return ClauseKind.SELECT
    if " keep the records where " in words:
        return ClauseKind.WHERE
    if " sort " in words or " in ascending order " in words or " in descending order " in words:
        return ClauseKind.ORDER_BY
    if hint is not None:
        return hint
    raise GenerationError(f"cannot determine the clause kind of {text!r}")


# -- rule-based generation -----------------------------------------------------


def _check_done(s: _Stream, text: str) -> None:
    while not s.eof() and isinstance(s.current(), str) and s.current().strip(",.;:") == "":
        s.i += 1
    if not s.eof():
        raise GenerationError(f"could not interpret {s.current()!r} in {text!r}")


class RuleBasedGenerator:
    """Inverse application of the translation rules; no model involved."""

    name = "rule-based"

    def generate(self, text: str, ctx: GenerationContext) -> Clause:
        if not text.strip():
            raise GenerationError("empty explanation text")
        schema = ctx.schema
        tables = ctx.tables()
        kind = infer_clause_type(text, schema, tables, hint=ctx.kind_hint)
        s = _Stream(_elements(text, schema, tables))

        if kind == ClauseKind.SELECT:
            if not s.accept_words("return"):
                raise GenerationError(f"SELECT step must begin with a return cue: {text!r}")
            items, distinct = _parse_item_list(s)
            _check_done(s, text)
            clause: Clause = SelectClause(tuple(items), distinct)
        elif kind == ClauseKind.FROM_JOIN_ON:
            if not s.accept_words("in table"):
                raise GenerationError(f"FROM step must begin with 'In table': {text!r}")
            head = s.take_entity("table")
            if head is None:
                raise GenerationError("expected a table name after 'In table'")
            joins: list[str] = []
            while s.accept_words("and table"):
                t = s.take_entity("table")
                if t is None:
                    raise GenerationError("expected a table name after 'and table'")
                joins.append(t.binding or t.text)
            ons: list[Condition] = []
            if s.accept_words("where"):
                ons = list(iter_conjuncts(_parse_condition(s, schema)))
            _check_done(s, text)
            join_nodes = []
            for i, t in enumerate(joins):
                on = ons[i] if i < len(ons) else None
                if i == len(joins) - 1 and len(ons) > len(joins):
                    on = conjoin(ons[i:])
                join_nodes.append(Join(t, on))
            clause = FromClause(head.binding or head.text, tuple(join_nodes))
        elif kind in (ClauseKind.WHERE, ClauseKind.HAVING):
            opener = ("keep the groups where" if kind == ClauseKind.HAVING
                      else "keep the records where")
            if not s.accept_words(opener):
                raise GenerationError(f"{kind.value} step must begin with its cue: {text!r}")
            cond = _parse_condition(s, schema)
            _check_done(s, text)
            clause = HavingClause(cond) if kind == ClauseKind.HAVING else WhereClause(cond)
        elif kind == ClauseKind.GROUP_BY:
            if not s.accept_words("group the records based on"):
                if not s.accept_words("group"):
                    raise GenerationError(f"GROUP BY step must begin with a group cue: {text!r}")
                s.accept_words("the records based on")
            keys = []
            col = _parse_column(s)
            if col is None:
                raise GenerationError("expected a grouping column")
            keys.append(col)
            while s.accept_list_separator():
                col = _parse_column(s)
                if col is None:
                    raise GenerationError("expected a grouping column")
                keys.append(col)
            _check_done(s, text)
            clause = GroupClause(tuple(keys))
        else:  # ORDER_BY
            limit = _parse_limit_tail(s)
            if limit is not None:
                _check_done(s, text)
                clause = OrderClause((), limit)
            else:
                if not s.accept_words("sort the records based on"):
                    if not s.accept_words("sort"):
                        raise GenerationError(f"ORDER BY step must begin with a sort cue: {text!r}")
                    s.accept_words("the records based on")
                keys = []
                while True:
                    expr = _parse_item(s)
                    if expr is None:
                        raise GenerationError("expected a sort key")
                    direction = None
                    if s.accept_words("in ascending order"):
                        direction = "ASC"
                    elif s.accept_words("in descending order"):
                        direction = "DESC"
                    keys.append(OrderKey(expr, direction))
                    if s.peek_words("and return the first record") or s.peek_words("and return the top"):
                        s.accept_words("and")
                        limit = _parse_limit_tail(s)
                        break
                    if not s.accept_list_separator():
                        break
                _check_done(s, text)
                clause = OrderClause(tuple(keys), limit)

        validate_clause(clause, schema)
        return clause


def validate_clause(clause: Clause, schema: SchemaCatalog) -> None:
    """Reject clauses whose tables/columns do not resolve against the schema."""

    def check_column(ref: ColumnRef) -> None:
        if ref.table is not None:
            schema.canonical_column(ref.table, ref.column)
        elif not schema.tables_with_column(ref.column):
            raise GenerationError(f"unknown column {ref.column!r}")

    def check_operand(x) -> None:
        if isinstance(x, ColumnRef):
            check_column(x)
        elif isinstance(x, FuncCall) and isinstance(x.arg, ColumnRef):
            check_column(x.arg)
        elif isinstance(x, SelectCore):
            check_core(x)

    def check_cond(c: Condition | None) -> None:
        if c is None:
            return
        if isinstance(c, BoolOp):
            check_cond(c.left)
            check_cond(c.right)
        elif isinstance(c, Not):
            check_cond(c.operand)
        elif isinstance(c, Between):
            for x in (c.left, c.low, c.high):
                check_operand(x)
        elif isinstance(c, Comparison):
            check_operand(c.left)
            check_operand(c.right)

    def check_core(core: SelectCore) -> None:
        if core.from_table is not None and schema.table(core.from_table) is None:
            raise GenerationError(f"unknown table {core.from_table!r}")
        for x in core.items:
            check_operand(x)

    try:
        if isinstance(clause, SelectClause):
            for x in clause.items:
                check_operand(x)
        elif isinstance(clause, FromClause):
            for t in clause.tables():
                if schema.table(t) is None:
                    raise GenerationError(f"unknown table {t!r}")
            for j in clause.joins:
                check_cond(j.on)
        elif isinstance(clause, (WhereClause, HavingClause)):
            check_cond(clause.condition)
        elif isinstance(clause, GroupClause):
            for k in clause.keys:
                check_column(k)
        elif isinstance(clause, OrderClause):
            for k in clause.keys:
                check_operand(k.expr)
    except Exception as exc:
        if isinstance(exc, GenerationError):
            raise
        raise GenerationError(str(exc)) from None


# -- clause SQL fragments (remote backend output) ------------------------------


def parse_clause_sql(text: str, schema: SchemaCatalog,
                     context_tables: tuple[str, ...] = ()) -> Clause:
    """Parse a clause-level SQL fragment like "WHERE age > 30" or "SELECT name"."""
    from .parser import _Parser, tokenize  # local import to avoid cycle at module load

    stripped = text.strip().rstrip(";")
    head = stripped.split(None, 1)[0].upper() if stripped else ""
    try:
        if head == "SELECT":
            core = _Parser(tokenize(stripped)).parse_select_core()
            clause: Clause = SelectClause(core.items, core.distinct)
        elif head in ("FROM", "WHERE", "HAVING", "GROUP", "ORDER", "LIMIT"):
            core = _Parser(tokenize("SELECT * " + stripped)).parse_select_core()
            if head == "FROM":
                clause = FromClause(core.from_table, core.joins)
            elif head == "WHERE":
                clause = WhereClause(core.where)
            elif head == "HAVING":
                clause = HavingClause(core.having)
            elif head == "GROUP":
                clause = GroupClause(core.group_by)
            else:
                clause = OrderClause(core.order_by, core.limit)
        else:
            raise GenerationError(f"unrecognized clause fragment {text!r}")
    except SqlSyntaxError as exc:
        raise GenerationError(f"invalid clause SQL {text!r}: {exc}") from None
    clause = _canonicalize_clause(clause, schema, context_tables)
    validate_clause(clause, schema)
    return clause


def _canonicalize_clause(clause: Clause, schema: SchemaCatalog,
                         context_tables: tuple[str, ...]) -> Clause:
    from .editing import _map_columns, _map_tables  # shared rebuild walkers

    def table_fn(name: str) -> str:
        return schema.canonical_table(name)

    def col_fn(ref: ColumnRef) -> ColumnRef:
        if ref.table is not None:
            table = schema.canonical_table(ref.table)
            return ColumnRef(schema.canonical_column(table, ref.column), table)
        for t in context_tables:
            tab = schema.table(t)
            if tab and tab.has_column(ref.column):
                return ColumnRef(schema.canonical_column(t, ref.column))
        owners = schema.tables_with_column(ref.column)
        if owners:
            return ColumnRef(schema.canonical_column(owners[0], ref.column))
        return ref

    try:
        clause = _map_tables(clause, table_fn)
        clause = _map_columns(clause, col_fn)
    except Exception as exc:
        raise GenerationError(str(exc)) from None
    return clause


class RemoteGenerator:
    """HTTP client for an external text-to-clause service."""

    name = "remote"

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def generate(self, text: str, ctx: GenerationContext) -> Clause:
        siblings = {
            kind.value: render_clause_sql(cl) for kind, cl in ctx.siblings.items()
        }
        payload = {
            "explanation": text,
            "schema_id": ctx.schema.schema_id,
            "clause_kind_hint": ctx.kind_hint.value if ctx.kind_hint else None,
            "sibling_sql": siblings,
        }
        req = urllib.request.Request(
            self.base_url,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise RemoteBackendError(f"clause backend returned {exc.code}",
                                     retryable=exc.code >= 500) from None
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise RemoteBackendError(f"clause backend unreachable: {exc}") from None
        except json.JSONDecodeError as exc:
            raise RemoteBackendError(f"malformed clause backend response: {exc}",
                                     retryable=False) from None
        if not isinstance(body, dict) or "clause_sql" not in body:
            raise RemoteBackendError("clause backend response missing 'clause_sql'",
                                     retryable=False)
        return parse_clause_sql(str(body["clause_sql"]), ctx.schema, ctx.tables())


def render_clause_sql(clause: Clause) -> str:
    """Clause rendered as its SQL fragment."""
    if isinstance(clause, SelectClause):
        head = "SELECT DISTINCT " if clause.distinct else "SELECT "
        return head + ", ".join(render_expr(x) for x in clause.items)
    if isinstance(clause, FromClause):
        parts = [f"FROM {clause.from_table}"] if clause.from_table else ["FROM"]
        for j in clause.joins:
            if j.on is None:
                parts.append(f", {j.table}")
            else:
                parts.append(f" JOIN {j.table} ON {render_condition(j.on)}")
        return "".join(parts)
    if isinstance(clause, WhereClause):
        return f"WHERE {render_condition(clause.condition)}"
    if isinstance(clause, GroupClause):
        return "GROUP BY " + ", ".join(render_expr(k) for k in clause.keys)
    if isinstance(clause, HavingClause):
        return f"HAVING {render_condition(clause.condition)}"
    if isinstance(clause, OrderClause):
        parts = []
        if clause.keys:
            keys = []
            for k in clause.keys:
                t = render_expr(k.expr)
                if k.direction:
                    t += f" {k.direction}"
                keys.append(t)
            parts.append("ORDER BY " + ", ".join(keys))
        if clause.limit is not None:
            parts.append(f"LIMIT {clause.limit}")
        return " ".join(parts)
    raise GenerationError(f"cannot render clause {clause!r}")


def generate_clause(text: str, ctx: GenerationContext, backend=None) -> Clause:
    """Produce a clause from an explanation sentence using the given backend
    (the rule-based generator by default)."""
    backend = backend or RuleBasedGenerator()
    clause = backend.generate(text, ctx)
    validate_clause(clause, ctx.schema)
    return clause
