"""Translate clauses into natural-language steps with entity spans.

Every sentence is assembled from a fixed piece vocabulary: keyword phrases
("Return", "Keep the records where", "is greater than", ...), entity pieces
(columns, tables, literals) and glue (spaces, articles, list connectives).
Entity pieces become spans linking the text back to schema elements, keyword
phrases become keyword-phrase spans, and glue is plain connective text.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

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
    Operand,
    Query,
    SelectCore,
    Star,
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
    StepSlot,
    WhereClause,
    execution_order,
    max_block_depth,
    node_at,
    ordinal_word,
)
from .errors import ExplainError
from .schema import SchemaCatalog
from .synonyms import SYNONYMS

OP_PHRASES = {
    "=": "is",
    "!=": "is not",
    ">": "is greater than",
    ">=": "is greater than or equal to",
    "<": "is less than",
    "<=": "is less than or equal to",
    "IN": "is in",
    "NOT IN": "is not in",
    "LIKE": "is in the form of",
    "NOT LIKE": "is not in the form of",
}

AGG_PHRASES = {
    "COUNT": "the number of",
    "AVG": "the average value of",
    "MAX": "the maximum value of",
    "MIN": "the minimum value of",
    "SUM": "the sum value of",
}

CLAUSE_OPENERS = {
    ClauseKind.SELECT: "Return",
    ClauseKind.FROM_JOIN_ON: "In table",
    ClauseKind.WHERE: "Keep the records where",
    ClauseKind.GROUP_BY: "Group the records based on",
    ClauseKind.HAVING: "Keep the groups where",
    ClauseKind.ORDER_BY: "Sort the records based on",
}

COMPOUND_COMBINE = {
    "INTERSECT": "Return the intersection of them",
    "UNION": "Return the union of them",
    "EXCEPT": "Return the records in q1 but not in q2",
}


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    cls: str  # column | table | literal | keyword-phrase
    entity: str | None = None  # dotted schema identifier or literal rendering

    def slice(self, text: str) -> str:
        return text[self.start:self.end]


@dataclass(frozen=True)
class ExplanationStep:
    index: int
    text: str
    spans: tuple[Span, ...]
    role: str  # clause | marker | combine
    kind: ClauseKind | None = None
    clause: Clause | None = None
    path: tuple = ()
    block_index: int | None = None

    def entity_spans(self) -> tuple[Span, ...]:
        return tuple(s for s in self.spans if s.cls != "keyword-phrase")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "text": self.text,
            "clause_kind": self.kind.value if self.kind else None,
            "role": self.role,
            "spans": [
                {"start": s.start, "end": s.end, "entity": s.entity, "class": s.cls}
                for s in self.spans
            ],
        }


@dataclass(frozen=True)
class Explanation:
    steps: tuple[ExplanationStep, ...]
    tree: ClauseTree
    schema_id: str
    max_block_depth: int = 0

    @property
    def deep_nesting(self) -> bool:
        return self.max_block_depth > 2

    def step(self, index: int) -> ExplanationStep:
        for s in self.steps:
            if s.index == index:
                return s
        raise IndexError(f"no step {index}")

    def texts(self) -> list[str]:
        return [s.text for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "deep_nesting": self.deep_nesting,
            "steps": [s.to_dict() for s in self.steps],
        }


class _StepBuilder:
    def __init__(self):
        self.parts: list[str] = []
        self.spans: list[Span] = []
        self.length = 0

    def glue(self, text: str) -> None:
        self.parts.append(text)
        self.length += len(text)

    def keyword(self, text: str) -> None:
        self.spans.append(Span(self.length, self.length + len(text), "keyword-phrase"))
        self.glue(text)

    def entity(self, text: str, cls: str, entity: str) -> None:
        self.spans.append(Span(self.length, self.length + len(text), cls, entity))
        self.glue(text)

    def done(self) -> tuple[str, tuple[Span, ...]]:
        return "".join(self.parts), tuple(self.spans)


@dataclass
class _Namer:
    """Resolves display phrases and table qualification for one select core."""

    schema: SchemaCatalog
    context_tables: tuple[str, ...] = ()

    def _ambiguous(self, column: str) -> bool:
        owners = [t for t in self.context_tables
                  if self.schema.table(t) and self.schema.table(t).has_column(column)]
        return len(owners) > 1

    def owner_of(self, ref: ColumnRef) -> str | None:
        if ref.table:
            return ref.table
        for t in self.context_tables:
            table = self.schema.table(t)
            if table and table.has_column(ref.column):
                return t
        owners = self.schema.tables_with_column(ref.column)
        return owners[0] if len(owners) == 1 else None

    def column_pieces(self, b: _StepBuilder, ref: ColumnRef, leading_the: bool = True) -> None:
        owner = self.owner_of(ref)
        display = self.schema.readable(f"{owner}.{ref.column}") if owner else ref.column
        if leading_the:
            b.glue("the ")
        b.entity(display, "column", f"{owner}.{ref.column}" if owner else ref.column)
        if ref.table and self._ambiguous(ref.column):
            b.glue(" of ")
            b.entity(self.schema.readable(ref.table), "table", ref.table)

    def table_piece(self, b: _StepBuilder, name: str) -> None:
        b.entity(self.schema.readable(name), "table", name)


def _literal_piece(b: _StepBuilder, lit: Literal) -> None:
    if lit.is_string:
        text = f'"{lit.value}"'
    else:
        text = lit.text
    b.entity(text, "literal", text)


def _item_pieces(b: _StepBuilder, item, namer: _Namer) -> None:
    if isinstance(item, Star):
        b.keyword("all the records")
    elif isinstance(item, FuncCall):
        if item.func == "COUNT" and isinstance(item.arg, Star):
            b.keyword("the number of records")
        else:
            phrase = AGG_PHRASES.get(item.func)
            if phrase is None:
                raise ExplainError(f"no translation for function {item.func!r}")
            b.keyword(phrase)
            b.glue(" ")
            namer.column_pieces(b, item.arg, leading_the=False)
    elif isinstance(item, ColumnRef):
        namer.column_pieces(b, item)
    else:
        raise ExplainError(f"no translation for {item!r}")


def _item_list_pieces(b: _StepBuilder, items, namer: _Namer, distinct: bool = False) -> None:
    for i, item in enumerate(items):
        if i > 0:
            b.glue(", " if i < len(items) - 1 else " and ")
        if i == 0 and distinct:
            probe = _StepBuilder()
            _item_pieces(probe, item, namer)
            first_text = "".join(probe.parts)
            if first_text.startswith("the "):
                b.glue("the ")
                b.keyword("distinct")
                b.glue(" ")
                _append_stripped(b, item, namer)
            else:
                b.keyword("distinct")
                b.glue(" ")
                _item_pieces(b, item, namer)
            continue
        _item_pieces(b, item, namer)


def _append_stripped(b: _StepBuilder, item, namer: _Namer) -> None:
    """Append an item's pieces minus its leading "the "."""
    probe = _StepBuilder()
    _item_pieces(probe, item, namer)
    text, spans = probe.done()
    assert text.startswith("the ")
    before = b.length
    b.glue(text[4:])
    for s in spans:
        # aggregate keyword spans include the stripped "the "; clip into the
        # appended region instead of shifting blindly
        start = before + max(0, s.start - 4)
        end = before + (s.end - 4)
        b.spans.append(Span(start, end, s.cls, s.entity))


def _operand_pieces(b: _StepBuilder, operand, namer: _Namer) -> None:
    if isinstance(operand, Literal):
        _literal_piece(b, operand)
    elif isinstance(operand, ColumnRef):
        namer.column_pieces(b, operand)
    elif isinstance(operand, FuncCall):
        _item_pieces(b, operand, namer)
    elif isinstance(operand, Star):
        b.keyword("all the records")
    else:
        raise ExplainError(f"no translation for operand {operand!r}")


def _inline_subquery_pieces(b: _StepBuilder, sub: SelectCore, namer: _Namer) -> None:
    inner_namer = _Namer(namer.schema, sub.tables())
    _item_list_pieces(b, sub.items[:1], inner_namer, sub.distinct)
    b.glue(" ")
    b.keyword("in table")
    b.glue(" ")
    inner_namer.table_piece(b, sub.from_table)
    if sub.where is not None:
        b.glue(" ")
        b.keyword("where")
        b.glue(" ")
        _condition_pieces(b, sub.where, inner_namer)


def _condition_pieces(b: _StepBuilder, cond: Condition, namer: _Namer) -> None:
    if isinstance(cond, Comparison):
        _operand_pieces(b, cond.left, namer)
        phrase = OP_PHRASES.get(cond.op)
        if phrase is None:
            raise ExplainError(f"no translation for operator {cond.op!r}")
        b.glue(" ")
        b.keyword(phrase)
        b.glue(" ")
        if isinstance(cond.right, (SelectCore, Compound)):
            _inline_subquery_pieces(b, cond.right, namer)
        else:
            _operand_pieces(b, cond.right, namer)
    elif isinstance(cond, Between):
        _operand_pieces(b, cond.left, namer)
        b.glue(" ")
        b.keyword("is between")
        b.glue(" ")
        _operand_pieces(b, cond.low, namer)
        b.glue(" and ")
        _operand_pieces(b, cond.high, namer)
    elif isinstance(cond, BoolOp):
        _condition_pieces(b, cond.left, namer)
        b.glue(" and " if cond.op == "AND" else " or ")
        _condition_pieces(b, cond.right, namer)
    elif isinstance(cond, Not):
        b.keyword("not")
        b.glue(" ")
        _condition_pieces(b, cond.operand, namer)
    else:
        raise ExplainError(f"no translation for condition {cond!r}")


def _order_key_pieces(b: _StepBuilder, key, namer: _Namer) -> None:
    if isinstance(key.expr, FuncCall):
        _item_pieces(b, key.expr, namer)
    else:
        namer.column_pieces(b, key.expr)
    if key.direction == "ASC":
        b.glue(" ")
        b.keyword("in ascending order")
    elif key.direction == "DESC":
        b.glue(" ")
        b.keyword("in descending order")


def _limit_pieces(b: _StepBuilder, limit: int, capitalized: bool) -> None:
    if limit == 1:
        b.keyword("Return the first record" if capitalized else "return the first record")
    else:
        b.keyword("Return the top" if capitalized else "return the top")
        b.glue(" ")
        b.entity(str(limit), "literal", str(limit))
        b.glue(" ")
        b.keyword("records")


def explain_clause(clause: Clause, schema: SchemaCatalog,
                   context_tables: tuple[str, ...] = ()) -> ExplanationStep:
    """Translate one clause into a sentence with entity spans.

    ``context_tables`` are the tables of the owning select core; they drive
    display-name lookup and the "{col} of {table}" disambiguation.
    """
    if isinstance(clause, FromClause) and not context_tables:
        context_tables = clause.tables()
    namer = _Namer(schema, context_tables)
    b = _StepBuilder()

    if isinstance(clause, SelectClause):
        b.keyword(CLAUSE_OPENERS[ClauseKind.SELECT])
        b.glue(" ")
        _item_list_pieces(b, clause.items, namer, clause.distinct)
    elif isinstance(clause, FromClause):
        b.keyword(CLAUSE_OPENERS[ClauseKind.FROM_JOIN_ON])
        b.glue(" ")
        namer.table_piece(b, clause.from_table)
        conditions = []
        for join in clause.joins:
            b.glue(" ")
            b.keyword("and table")
            b.glue(" ")
            namer.table_piece(b, join.table)
            if join.on is not None:
                conditions.append(join.on)
        if conditions:
            b.glue(" ")
            b.keyword("where")
            b.glue(" ")
            for i, on in enumerate(conditions):
                if i > 0:
                    b.glue(" and ")
                _condition_pieces(b, on, namer)
    elif isinstance(clause, WhereClause):
        b.keyword(CLAUSE_OPENERS[ClauseKind.WHERE])
        b.glue(" ")
        _condition_pieces(b, clause.condition, namer)
    elif isinstance(clause, GroupClause):
        b.keyword(CLAUSE_OPENERS[ClauseKind.GROUP_BY])
        b.glue(" ")
        for i, key in enumerate(clause.keys):
            if i > 0:
                b.glue(", " if i < len(clause.keys) - 1 else " and ")
            namer.column_pieces(b, key)
    elif isinstance(clause, HavingClause):
        b.keyword(CLAUSE_OPENERS[ClauseKind.HAVING])
        b.glue(" ")
        _condition_pieces(b, clause.condition, namer)
    elif isinstance(clause, OrderClause):
        if not clause.keys:
            # bare LIMIT: its own final step
            _limit_pieces(b, clause.limit, capitalized=True)
        else:
            b.keyword(CLAUSE_OPENERS[ClauseKind.ORDER_BY])
            b.glue(" ")
            for i, key in enumerate(clause.keys):
                if i > 0:
                    b.glue(", " if i < len(clause.keys) - 1 else " and ")
                _order_key_pieces(b, key, namer)
            if clause.limit is not None:
                b.glue(" and ")
                _limit_pieces(b, clause.limit, capitalized=False)
    else:
        raise ExplainError(f"no translation for clause {clause!r}")

    text, spans = b.done()
    return ExplanationStep(0, text, spans, "clause", clause.kind, clause)


def _combine_step(slot: StepSlot, tree: ClauseTree, schema: SchemaCatalog) -> tuple[str, tuple[Span, ...]]:
    b = _StepBuilder()
    node = node_at(tree, slot.path)
    if isinstance(node, CompoundTree):
        b.keyword(COMPOUND_COMBINE[slot.combine_op])
        return b.done()
    block: Block = node.blocks[slot.block_index]
    from_clause = node.first(ClauseKind.FROM_JOIN_ON)
    context = from_clause.tables() if isinstance(from_clause, FromClause) else ()
    namer = _Namer(schema, context)
    opener = ("Keep the groups where" if block.origin == ClauseKind.HAVING
              else "Keep the records where")
    b.keyword(opener)
    b.glue(" ")
    _operand_pieces(b, block.left, namer)
    b.glue(" ")
    if block.op == "IN":
        b.keyword("in")
    elif block.op == "NOT IN":
        b.keyword("not in")
    else:
        b.keyword(OP_PHRASES[block.op])
    b.glue(" ")
    b.keyword(f"q{slot.block_index + 1}")
    return b.done()


def explain_query(tree: ClauseTree, schema: SchemaCatalog) -> Explanation:
    """One step per execution-ordered clause, with compound/subquery blocks
    wrapped in first-query / second-query templates."""
    steps: list[ExplanationStep] = []
    for slot in execution_order(tree):
        if slot.role == "marker":
            text = f"Start the {ordinal_word(slot.ordinal)} query:"
            spans = (Span(0, len(text), "keyword-phrase"),)
            steps.append(ExplanationStep(len(steps) + 1, text, spans, "marker",
                                         path=slot.path))
        elif slot.role == "combine":
            text, spans = _combine_step(slot, tree, schema)
            steps.append(ExplanationStep(len(steps) + 1, text, spans, "combine",
                                         kind=slot.kind, path=slot.path,
                                         block_index=slot.block_index))
        else:
            core = node_at(tree, slot.path)
            from_clause = core.first(ClauseKind.FROM_JOIN_ON)
            context = from_clause.tables() if isinstance(from_clause, FromClause) else ()
            step = explain_clause(slot.clause, schema, context)
            steps.append(replace(step, index=len(steps) + 1, path=slot.path))
    return Explanation(tuple(steps), tree, schema.schema_id, max_block_depth(tree))


# -- paraphrasing ---------------------------------------------------------


def _template_occurrences(text: str) -> list[tuple[int, int, str]]:
    """(start, end, template word) hits, longest-first, non-overlapping."""
    lower = text.lower()
    hits: list[tuple[int, int, str]] = []
    taken: list[tuple[int, int]] = []
    for template in sorted(SYNONYMS, key=lambda t: -len(t)):
        start = 0
        while True:
            pos = lower.find(template, start)
            if pos < 0:
                break
            end = pos + len(template)
            start = pos + 1
            before_ok = pos == 0 or not lower[pos - 1].isalnum()
            after_ok = end == len(lower) or not lower[end].isalnum()
            if not (before_ok and after_ok):
                continue
            if any(s < end and pos < e for s, e in taken):
                continue
            hits.append((pos, end, template))
            taken.append((pos, end))
    return sorted(hits)


def _substitute(text: str, rng: random.Random, prob: float) -> str:
    out: list[str] = []
    cursor = 0
    for start, end, template in _template_occurrences(text):
        out.append(text[cursor:start])
        original = text[start:end]
        if rng.random() < prob:
            choice = rng.choice(SYNONYMS[template])
            if original[0].isupper():
                choice = choice[0].upper() + choice[1:]
            out.append(choice)
        else:
            out.append(original)
        cursor = end
    out.append(text[cursor:])
    return "".join(out)


def paraphrase(step: ExplanationStep, seed: int | None = None,
               rng: random.Random | None = None, prob: float = 0.5) -> ExplanationStep:
    """Independently keep or replace each template word with a synonym.

    Entity spans are never altered, only shifted; deterministic for a fixed
    seed. Returns the paraphrased step (``.text`` carries the new sentence).
    """
    if rng is None:
        rng = random.Random(seed)
    parts: list[str] = []
    new_spans: list[Span] = []
    cursor = 0
    length = 0
    for span in step.spans:
        gap = step.text[cursor:span.start]
        parts.append(gap)
        length += len(gap)
        piece = step.text[span.start:span.end]
        if span.cls == "keyword-phrase":
            piece = _substitute(piece, rng, prob)
        new_spans.append(Span(length, length + len(piece), span.cls, span.entity))
        parts.append(piece)
        length += len(piece)
        cursor = span.end
    tail = step.text[cursor:]
    parts.append(tail)
    return replace(step, text="".join(parts), spans=tuple(new_spans))
