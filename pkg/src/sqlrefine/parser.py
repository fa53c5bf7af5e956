"""Recursive-descent parser for the supported SQL subset.

Accepted shape per select core::

    SELECT [DISTINCT] items
    [FROM table [, table | [AS] alias]*  [JOIN table [AS alias] ON cond]*]
    [WHERE cond] [GROUP BY cols] [HAVING cond]
    [ORDER BY key [ASC|DESC], ...] [LIMIT n]

Cores combine with INTERSECT / UNION / EXCEPT (left-associative, parentheses
accepted). Aliases (T1, ``AS x``) are resolved away during parsing: the AST
stores canonical table names only. Keywords are case-insensitive; identifiers
canonicalize to the schema's spelling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast_nodes import (
    AGG_FUNCS,
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
    Operand,
    OrderKey,
    Query,
    SelectCore,
    SelectItem,
    Star,
)
from .errors import ResolutionError, SqlSyntaxError
from .schema import SchemaCatalog

KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "JOIN", "ON", "WHERE", "GROUP", "BY",
    "HAVING", "ORDER", "LIMIT", "AND", "OR", "NOT", "IN", "LIKE", "BETWEEN",
    "INTERSECT", "UNION", "EXCEPT", "AS", "ASC", "DESC",
    "COUNT", "AVG", "MAX", "MIN", "SUM",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d+|\d+)
  | (?P<string>'(?:[^']|'')*'|"(?:[^"]|"")*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|<>|=|<|>)
  | (?P<punct>[(),.;*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # KEYWORD | IDENT | NUMBER | STRING | OP | PUNCT | EOF
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        value = m.group()
        if m.lastgroup == "number":
            tokens.append(Token("NUMBER", value, m.start()))
        elif m.lastgroup == "string":
            tokens.append(Token("STRING", value, m.start()))
        elif m.lastgroup == "ident":
            if value.upper() in KEYWORDS:
                tokens.append(Token("KEYWORD", value.upper(), m.start()))
            else:
                tokens.append(Token("IDENT", value, m.start()))
        elif m.lastgroup == "op":
            op = "!=" if value == "<>" else value
            tokens.append(Token("OP", op, m.start()))
        else:
            tokens.append(Token("PUNCT", value, m.start()))
    tokens.append(Token("EOF", "", len(text)))
    return tokens


@dataclass
class _RawColumn:
    """Column reference before alias/schema resolution."""
    column: str
    qualifier: str | None  # alias or table name as written, None if bare


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    # -- token helpers -------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def at_keyword(self, *kws: str) -> bool:
        t = self.peek()
        return t.kind == "KEYWORD" and t.value in kws

    def take(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "EOF":
            self.i += 1
        return t

    def accept_keyword(self, *kws: str) -> Token | None:
        if self.at_keyword(*kws):
            return self.take()
        return None

    def expect_keyword(self, kw: str) -> Token:
        t = self.peek()
        if not self.at_keyword(kw):
            raise SqlSyntaxError(f"unexpected {t.value or 'end of input'!r}", t.pos, (kw,))
        return self.take()

    def expect_punct(self, p: str) -> Token:
        t = self.peek()
        if t.kind != "PUNCT" or t.value != p:
            raise SqlSyntaxError(f"unexpected {t.value or 'end of input'!r}", t.pos, (p,))
        return self.take()

    def at_punct(self, p: str) -> bool:
        t = self.peek()
        return t.kind == "PUNCT" and t.value == p

    def expect_ident(self, what: str) -> Token:
        t = self.peek()
        if t.kind != "IDENT":
            raise SqlSyntaxError(f"unexpected {t.value or 'end of input'!r}", t.pos, (what,))
        return self.take()

    # -- grammar -------------------------------------------------------

    def parse_query(self) -> Query:
        node = self.parse_operand_query()
        while self.at_keyword("INTERSECT", "UNION", "EXCEPT"):
            op = self.take().value
            right = self.parse_operand_query()
            node = Compound(op, node, right)
        return node

    def parse_operand_query(self) -> Query:
        if self.at_punct("("):
            self.take()
            inner = self.parse_query()
            self.expect_punct(")")
            return inner
        return self.parse_select_core()

    def parse_select_core(self) -> SelectCore:
        self.expect_keyword("SELECT")
        distinct = self.accept_keyword("DISTINCT") is not None
        items = [self.parse_select_item()]
        while self.at_punct(","):
            self.take()
            items.append(self.parse_select_item())

        from_table = None
        joins: list[Join] = []
        aliases: dict[str, str] = {}
        if self.accept_keyword("FROM"):
            from_table = self.parse_table_ref(aliases)
            while True:
                if self.at_punct(","):
                    self.take()
                    joins.append(Join(self.parse_table_ref(aliases), None))
                elif self.at_keyword("JOIN"):
                    self.take()
                    table = self.parse_table_ref(aliases)
                    self.expect_keyword("ON")
                    joins.append(Join(table, self.parse_condition()))
                else:
                    break

        where = None
        if self.accept_keyword("WHERE"):
            where = self.parse_condition()

        group_by: list[ColumnRef] = []
        if self.at_keyword("GROUP"):
            self.take()
            self.expect_keyword("BY")
            raw = self.parse_raw_column()
            group_by.append(ColumnRef(raw.column, raw.qualifier))
            while self.at_punct(","):
                self.take()
                raw = self.parse_raw_column()
                group_by.append(ColumnRef(raw.column, raw.qualifier))

        having = None
        if self.accept_keyword("HAVING"):
            having = self.parse_condition()

        order_by: list[OrderKey] = []
        if self.at_keyword("ORDER"):
            self.take()
            self.expect_keyword("BY")
            order_by.append(self.parse_order_key())
            while self.at_punct(","):
                self.take()
                order_by.append(self.parse_order_key())

        limit = None
        if self.accept_keyword("LIMIT"):
            t = self.peek()
            if t.kind != "NUMBER" or "." in t.value:
                raise SqlSyntaxError("LIMIT takes an integer", t.pos, ("NUM",))
            self.take()
            limit = int(t.value)
            if limit <= 0:
                raise SqlSyntaxError("LIMIT must be positive", t.pos)

        core = SelectCore(
            items=tuple(items),
            distinct=distinct,
            from_table=from_table,
            joins=tuple(joins),
            where=where,
            group_by=tuple(group_by),  # still raw; resolved later
            having=having,
            order_by=tuple(order_by),
            limit=limit,
        )
        object.__setattr__(core, "_aliases", aliases)
        return core

    def parse_table_ref(self, aliases: dict[str, str]) -> str:
        name = self.expect_ident("table name").value
        if self.accept_keyword("AS"):
            alias = self.expect_ident("alias").value
            aliases[alias.lower()] = name
        elif self.peek().kind == "IDENT":
            # bare alias: clause keywords tokenize as KEYWORD, so any IDENT here
            # can only be an alias
            alias = self.take().value
            aliases[alias.lower()] = name
        return name

    def parse_select_item(self) -> SelectItem:
        if self.at_punct("*"):
            self.take()
            return Star()
        if self.at_keyword(*AGG_FUNCS):
            return self.parse_func_call()
        raw = self.parse_raw_column()
        return ColumnRef(raw.column, raw.qualifier)

    def parse_func_call(self) -> FuncCall:
        func = self.take().value
        self.expect_punct("(")
        if self.at_punct("*"):
            self.take()
            arg: ColumnRef | Star = Star()
        else:
            raw = self.parse_raw_column()
            arg = ColumnRef(raw.column, raw.qualifier)
        self.expect_punct(")")
        return FuncCall(func, arg)

    def parse_raw_column(self) -> _RawColumn:
        first = self.expect_ident("column name").value
        if self.at_punct("."):
            self.take()
            second = self.expect_ident("column name").value
            return _RawColumn(second, first)
        return _RawColumn(first, None)

    def parse_order_key(self) -> OrderKey:
        if self.at_keyword(*AGG_FUNCS):
            expr: ColumnRef | FuncCall = self.parse_func_call()
        else:
            raw = self.parse_raw_column()
            expr = ColumnRef(raw.column, raw.qualifier)
        direction = None
        kw = self.accept_keyword("ASC", "DESC")
        if kw:
            direction = kw.value
        return OrderKey(expr, direction)

    # conditions: OR < AND < NOT < comparison

    def parse_condition(self) -> Condition:
        node = self.parse_and()
        while self.at_keyword("OR"):
            self.take()
            node = BoolOp("OR", node, self.parse_and())
        return node

    def parse_and(self) -> Condition:
        node = self.parse_not()
        while self.at_keyword("AND"):
            self.take()
            node = BoolOp("AND", node, self.parse_not())
        return node

    def parse_not(self) -> Condition:
        # Leading NOT negates a condition; "x NOT IN"/"x NOT LIKE"/"x NOT BETWEEN"
        # never reach here because parse_comparison consumes the operand first.
        if self.at_keyword("NOT"):
            self.take()
            return Not(self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Condition:
        if self.at_punct("("):
            self.take()
            inner = self.parse_condition()
            self.expect_punct(")")
            return inner
        left = self.parse_operand()
        t = self.peek()
        negated = False
        if self.at_keyword("NOT"):
            self.take()
            negated = True
            t = self.peek()
        if self.at_keyword("BETWEEN"):
            self.take()
            low = self.parse_operand()
            self.expect_keyword("AND")
            high = self.parse_operand()
            node: Condition = Between(left, low, high)
            return Not(node) if negated else node
        if self.at_keyword("IN"):
            self.take()
            self.expect_punct("(")
            sub = self.parse_query()
            self.expect_punct(")")
            return Comparison(left, "NOT IN" if negated else "IN", sub)
        if self.at_keyword("LIKE"):
            self.take()
            pattern = self.parse_operand()
            return Comparison(left, "NOT LIKE" if negated else "LIKE", pattern)
        if negated:
            raise SqlSyntaxError("expected IN, LIKE or BETWEEN after NOT", t.pos,
                                 ("IN", "LIKE", "BETWEEN"))
        if t.kind == "OP":
            op = self.take().value
            if self.at_punct("("):
                # parenthesized scalar subquery
                self.take()
                sub = self.parse_query()
                self.expect_punct(")")
                return Comparison(left, op, sub)
            right = self.parse_operand()
            return Comparison(left, op, right)
        raise SqlSyntaxError(f"unexpected {t.value or 'end of input'!r}", t.pos,
                             ("comparison operator",))

    def parse_operand(self) -> Operand:
        t = self.peek()
        if t.kind == "NUMBER":
            self.take()
            value = float(t.value) if "." in t.value else int(t.value)
            return Literal(value, False, t.value)
        if t.kind == "STRING":
            self.take()
            quote = t.value[0]
            inner = t.value[1:-1].replace(quote * 2, quote)
            return Literal(inner, True)
        if self.at_keyword(*AGG_FUNCS):
            return self.parse_func_call()
        if t.kind == "IDENT":
            raw = self.parse_raw_column()
            return ColumnRef(raw.column, raw.qualifier)
        if self.at_punct("*"):
            self.take()
            return Star()
        raise SqlSyntaxError(f"unexpected {t.value or 'end of input'!r}", t.pos,
                             ("column", "literal", "aggregate"))


# -- alias and schema resolution ----------------------------------------


class _Resolver:
    def __init__(self, schema: SchemaCatalog):
        self.schema = schema

    def resolve(self, node: Query, scope_tables: tuple[str, ...] = (),
                scope_aliases: dict[str, str] | None = None) -> Query:
        if isinstance(node, Compound):
            return Compound(
                node.op,
                self.resolve(node.left, scope_tables, scope_aliases),
                self.resolve(node.right, scope_tables, scope_aliases),
            )
        return self.resolve_core(node, scope_tables, dict(scope_aliases or {}))

    def resolve_core(self, core: SelectCore, outer_tables: tuple[str, ...],
                     aliases: dict[str, str]) -> SelectCore:
        aliases.update(getattr(core, "_aliases", {}))

        def canon_table(name: str) -> str:
            target = aliases.get(name.lower(), name)
            return self.schema.canonical_table(target)

        from_table = canon_table(core.from_table) if core.from_table else None
        local = [from_table] if from_table else []
        join_tables = [canon_table(j.table) for j in core.joins]
        local.extend(join_tables)
        scope = tuple(local) + tuple(t for t in outer_tables if t not in local)

        def col(ref: ColumnRef) -> ColumnRef:
            if ref.table is not None:
                table = canon_table(ref.table)
                return ColumnRef(self.schema.canonical_column(table, ref.column), table)
            owners = [t for t in scope if self.schema.table(t).has_column(ref.column)]
            if not owners:
                raise ResolutionError(
                    f"column {ref.column!r} not found in referenced tables", ref.column)
            return ColumnRef(self.schema.canonical_column(owners[0], ref.column), None)

        def item(x: SelectItem) -> SelectItem:
            if isinstance(x, ColumnRef):
                return col(x)
            if isinstance(x, FuncCall):
                arg = x.arg if isinstance(x.arg, Star) else col(x.arg)
                return FuncCall(x.func, arg)
            return x

        def operand(x) -> Operand:
            if isinstance(x, ColumnRef):
                return col(x)
            if isinstance(x, FuncCall):
                return item(x)
            return x

        def cond(c: Condition | None) -> Condition | None:
            if c is None:
                return None
            if isinstance(c, BoolOp):
                return BoolOp(c.op, cond(c.left), cond(c.right))
            if isinstance(c, Not):
                return Not(cond(c.operand))
            if isinstance(c, Between):
                return Between(operand(c.left), operand(c.low), operand(c.high))
            if isinstance(c, Comparison):
                if isinstance(c.right, (SelectCore, Compound)):
                    right: object = self.resolve(c.right, scope, aliases)
                else:
                    right = operand(c.right)
                return Comparison(operand(c.left), c.op, right)
            raise TypeError(f"unexpected condition node {c!r}")

        joins = tuple(Join(t, cond(j.on)) for t, j in zip(join_tables, core.joins))
        group_by = tuple(col(g) for g in core.group_by)
        order_by = tuple(
            OrderKey(item(k.expr) if isinstance(k.expr, FuncCall) else col(k.expr), k.direction)
            for k in core.order_by
        )
        return SelectCore(
            items=tuple(item(x) for x in core.items),
            distinct=core.distinct,
            from_table=from_table,
            joins=joins,
            where=cond(core.where),
            group_by=group_by,
            having=cond(core.having),
            order_by=order_by,
            limit=core.limit,
        )


def parse_sql(text: str, schema: SchemaCatalog) -> Query:
    """Parse SQL text and resolve all references against the schema."""
    tokens = tokenize(text)
    parser = _Parser(tokens)
    tree = parser.parse_query()
    tail = parser.peek()
    if tail.kind == "PUNCT" and tail.value == ";":
        parser.take()
        tail = parser.peek()
    if tail.kind != "EOF":
        raise SqlSyntaxError(f"unexpected trailing input {tail.value!r}", tail.pos)
    return _Resolver(schema).resolve(tree)
