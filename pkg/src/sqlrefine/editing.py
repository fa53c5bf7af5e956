"""Detect what changed between an explanation and its edited version, and
apply atomic edits directly to the clause.

The flow is: chunk both texts into phrases (compound-noun entity phrases and
operator phrases stay whole), align the chunk sequences globally, classify the
aligned differences, and - when every difference is an atomic edit (same-class
entity replacement, column addition to a SELECT, column removal) - rewrite the
clause AST without regenerating it.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace as dc_replace

from .ast_nodes import (
    Between,
    BoolOp,
    ColumnRef,
    Comparison,
    Compound,
    FuncCall,
    Join,
    Literal,
    Not,
    OrderKey,
    SelectCore,
    Star,
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
from .errors import EditError
from .explain import AGG_PHRASES, CLAUSE_OPENERS, OP_PHRASES, Span
from .schema import SchemaCatalog
from .synonyms import SYNONYMS

ARTICLES = {"the", "a", "an"}
_CONNECTIVES = {"and", ","} | ARTICLES

_EXTRA_PHRASES = (
    "all the records",
    "the number of records",
    "number of records",
    # bare aggregate phrases: they must stay whole even when a schema column
    # shares a word with them ("average", "sum", ...)
    "average value of",
    "maximum value of",
    "minimum value of",
    "sum value of",
    "is between",
    "not in",
    "in table",
    "and table",
    "return the first record",
    "return the top",
    "in ascending order",
    "in descending order",
    "start the",
)


def _phrase_inventory() -> list[tuple[str, ...]]:
    phrases: set[tuple[str, ...]] = set()
    for text in list(OP_PHRASES.values()) + list(AGG_PHRASES.values()) \
            + [v for v in CLAUSE_OPENERS.values()] + list(_EXTRA_PHRASES):
        toks = tuple(text.lower().split())
        if len(toks) > 1:
            phrases.add(toks)
    for template, subs in SYNONYMS.items():
        for text in (template,) + subs:
            toks = tuple(text.lower().split())
            if len(toks) > 1:
                phrases.add(toks)
    return sorted(phrases, key=len, reverse=True)


_PHRASES = _phrase_inventory()
_NUMBER_RE = re.compile(r"^\d+(\.\d+)?$")


def _strip_punct(token: str) -> str:
    return token.strip(",.;:")


@dataclass(frozen=True)
class Chunk:
    text: str  # verbatim, may carry trailing punctuation
    cls: str  # column | table | literal | other
    binding: str | None = None  # "table.column", table name, or literal lexeme

    @property
    def norm(self) -> str:
        words = [w for w in _strip_punct(self.text.lower()).split()]
        while words and words[0] in ARTICLES:
            words = words[1:]
        while words and words[-1] in ARTICLES:
            words = words[:-1]
        return " ".join(words)

    def is_connective(self) -> bool:
        bare = self.text.strip().lower()
        return bare in _CONNECTIVES or _strip_punct(bare) in ARTICLES or bare == ""


@dataclass(frozen=True)
class ChunkSequence:
    chunks: tuple[Chunk, ...]

    def __iter__(self):
        return iter(self.chunks)

    def __len__(self):
        return len(self.chunks)

    def __getitem__(self, i):
        return self.chunks[i]


def _tokenize_words(text: str) -> list[str]:
    """Whitespace words, but a double-quoted string stays one token."""
    tokens: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        if text[i] == '"':
            j = text.find('"', i + 1)
            j = n - 1 if j < 0 else j
            end = j + 1
            # trailing punctuation sticks to the token
            while end < n and text[end] in ",.;:":
                end += 1
            tokens.append(text[i:end])
            i = end
        else:
            j = i
            while j < n and not text[j].isspace():
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _schema_vocab(schema: SchemaCatalog) -> list[tuple[tuple[str, ...], str, str]]:
    """(phrase tokens, class, binding) entries, longest phrases first."""
    vocab: list[tuple[tuple[str, ...], str, str]] = []
    for table in schema.tables:
        for name in {schema.readable(table.name).lower(), table.name.lower()}:
            vocab.append((tuple(name.split()), "table", table.name))
        for col, _ in table.columns:
            dotted = f"{table.name}.{col}"
            for name in {schema.readable(dotted).lower(), col.lower()}:
                vocab.append((tuple(name.split()), "column", dotted))
    vocab.sort(key=lambda v: len(v[0]), reverse=True)
    return vocab


def _pick_binding(candidates: list[tuple[str, str]], context_tables: tuple[str, ...],
                  schema: SchemaCatalog) -> tuple[str, str]:
    """Choose among same-phrase bindings: column beats table; among columns,
    prefer tables already referenced by the query, then declaration order."""
    columns = [c for c in candidates if c[0] == "column"]
    if columns:
        ctx = {t.lower() for t in context_tables}
        in_ctx = [c for c in columns if c[1].split(".")[0].lower() in ctx]
        pool = in_ctx or columns
        order = {t.name.lower(): i for i, t in enumerate(schema.tables)}
        pool.sort(key=lambda c: order.get(c[1].split(".")[0].lower(), 99))
        return pool[0]
    return candidates[0]


def chunk(text: str, schema: SchemaCatalog, spans: tuple[Span, ...] | None = None,
          context_tables: tuple[str, ...] = ()) -> ChunkSequence:
    """Split a step text into bound chunks.

    When the step's own spans are available the entity bindings are taken from
    them; otherwise entities are recognized by longest match against readable
    names, raw identifiers, quoted strings and numbers.
    """
    if spans is not None:
        return _chunk_with_spans(text, spans, schema, context_tables)

    tokens = _tokenize_words(text)
    vocab = _schema_vocab(schema)
    chunks: list[Chunk] = []
    i = 0
    while i < len(tokens):
        raw = tokens[i]
        stripped = _strip_punct(raw)
        if stripped.startswith('"') and stripped.endswith('"') and len(stripped) >= 2:
            chunks.append(Chunk(raw, "literal", stripped[1:-1]))
            i += 1
            continue
        if _NUMBER_RE.match(stripped):
            chunks.append(Chunk(raw, "literal", stripped))
            i += 1
            continue

        best_len = 0
        best: tuple[str, str] | None = None
        candidates: list[tuple[str, str]] = []
        for phrase, cls, binding in vocab:
            n = len(phrase)
            if n < best_len or i + n > len(tokens):
                continue
            window = tuple(_strip_punct(t).lower() for t in tokens[i:i + n])
            if window == phrase:
                if n > best_len:
                    best_len = n
                    candidates = [(cls, binding)]
                else:
                    candidates.append((cls, binding))
        phrase_len = _match_phrase(tokens, i)
        if phrase_len > best_len:
            chunks.append(Chunk(" ".join(tokens[i:i + phrase_len]), "other"))
            i += phrase_len
            continue
        if candidates:
            cls, binding = _pick_binding(candidates, context_tables, schema)
            chunks.append(Chunk(" ".join(tokens[i:i + best_len]), cls, binding))
            i += best_len
            continue
        if phrase_len > 1:
            chunks.append(Chunk(" ".join(tokens[i:i + phrase_len]), "other"))
            i += phrase_len
            continue
        chunks.append(Chunk(raw, "other"))
        i += 1
    return ChunkSequence(tuple(chunks))


def _match_phrase(tokens: list[str], i: int) -> int:
    for phrase in _PHRASES:
        n = len(phrase)
        if i + n > len(tokens):
            continue
        window = tuple(_strip_punct(t).lower() for t in tokens[i:i + n])
        if window == phrase:
            return n
    return 0


def _chunk_with_spans(text: str, spans: tuple[Span, ...], schema: SchemaCatalog,
                      context_tables: tuple[str, ...]) -> ChunkSequence:
    chunks: list[Chunk] = []
    cursor = 0
    entity_spans = [s for s in spans if s.cls != "keyword-phrase"]
    for span in entity_spans:
        gap = text[cursor:span.start]
        if gap.strip():
            chunks.extend(chunk(gap.strip(), schema, spans=None,
                                context_tables=context_tables).chunks)
        piece = text[span.start:span.end]
        binding = span.entity
        if span.cls == "literal" and binding and binding.startswith('"'):
            binding = binding[1:-1]
        chunks.append(Chunk(piece, span.cls, binding))
        cursor = span.end
    tail = text[cursor:]
    if tail.strip():
        chunks.extend(chunk(tail.strip(), schema, spans=None,
                            context_tables=context_tables).chunks)
    return ChunkSequence(tuple(chunks))


# -- global alignment ------------------------------------------------------

MATCH_SCORE = 2
ENTITY_SWAP_SCORE = 1
MISMATCH_SCORE = -1
GAP_SCORE = -1

_ENTITY_CLASSES = {"column", "table", "literal"}


def pair_score(a: Chunk, b: Chunk) -> int:
    if a.norm == b.norm:
        return MATCH_SCORE
    if a.cls == b.cls and a.cls in _ENTITY_CLASSES:
        return ENTITY_SWAP_SCORE
    return MISMATCH_SCORE


def align(c_o: ChunkSequence, c_n: ChunkSequence) -> list[tuple[Chunk | None, Chunk | None]]:
    """Global alignment of the two chunk sequences, maximizing total score.

    Ties prefer substitution over gaps, then the leftmost path.
    """
    old = list(c_o)
    new = list(c_n)
    n, m = len(old), len(new)
    score = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        score[i][0] = i * GAP_SCORE
    for j in range(1, m + 1):
        score[0][j] = j * GAP_SCORE
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            score[i][j] = max(
                score[i - 1][j - 1] + pair_score(old[i - 1], new[j - 1]),
                score[i - 1][j] + GAP_SCORE,
                score[i][j - 1] + GAP_SCORE,
            )
    pairs: list[tuple[Chunk | None, Chunk | None]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and score[i][j] == score[i - 1][j - 1] + pair_score(old[i - 1], new[j - 1]):
            pairs.append((old[i - 1], new[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and score[i][j] == score[i - 1][j] + GAP_SCORE:
            pairs.append((old[i - 1], None))
            i -= 1
        else:
            pairs.append((None, new[j - 1]))
            j -= 1
    pairs.reverse()
    return pairs


def alignment_score(pairs: list[tuple[Chunk | None, Chunk | None]]) -> int:
    total = 0
    for a, b in pairs:
        total += GAP_SCORE if a is None or b is None else pair_score(a, b)
    return total


# -- classification --------------------------------------------------------


class EditKind(enum.Enum):
    NO_CHANGE = "NO_CHANGE"
    ATOMIC = "ATOMIC"
    COMPLEX = "COMPLEX"


@dataclass(frozen=True)
class AtomicEdit:
    op: str  # REPLACE | ADD_COLUMN | REMOVE_COLUMN
    old: Chunk | None = None
    new: Chunk | None = None
    occurrence: int = 0  # REPLACE: which same-entity mention in the original text


@dataclass(frozen=True)
class EditClassification:
    kind: EditKind
    edits: tuple[AtomicEdit, ...] = ()


@dataclass(frozen=True)
class EditRequest:
    e_o: str
    e_n: str
    clause: Clause


def classify_edit(pairs: list[tuple[Chunk | None, Chunk | None]]) -> EditClassification:
    """NO_CHANGE if everything matches, ATOMIC when all differences are the
    three atomic patterns, COMPLEX otherwise. Pure article/connective edits do
    not count as changes."""
    edits: list[AtomicEdit] = []
    complex_found = False
    seen: dict[tuple[str, str], int] = {}
    for old, new in pairs:
        if old is not None and old.cls in _ENTITY_CLASSES:
            key = (old.cls, old.norm)
            occurrence = seen.get(key, 0)
            seen[key] = occurrence + 1
        if old is not None and new is not None:
            if old.norm == new.norm:
                continue
            if old.is_connective() and new.is_connective():
                continue
            if old.cls == new.cls and old.cls in _ENTITY_CLASSES:
                edits.append(AtomicEdit("REPLACE", old, new, occurrence))
            else:
                complex_found = True
        elif new is None:
            if old.is_connective():
                continue
            if old.cls == "column":
                edits.append(AtomicEdit("REMOVE_COLUMN", old=old))
            else:
                complex_found = True
        else:
            if new.is_connective():
                continue
            if new.cls == "column":
                edits.append(AtomicEdit("ADD_COLUMN", new=new))
            else:
                complex_found = True
    if complex_found:
        return EditClassification(EditKind.COMPLEX)
    if not edits:
        return EditClassification(EditKind.NO_CHANGE)
    return EditClassification(EditKind.ATOMIC, tuple(edits))


# -- direct transformation ---------------------------------------------------


def _binding_column(binding: str) -> tuple[str | None, str]:
    if "." in binding:
        table, col = binding.split(".", 1)
        return table, col
    return None, binding


class _Box:
    __slots__ = ("count", "done")

    def __init__(self):
        self.count = 0
        self.done = False


def _map_columns(node, fn):
    """Rebuild a clause/AST fragment, applying fn to ColumnRef leaves in the
    order they appear in the explanation text."""
    if isinstance(node, SelectClause):
        return dc_replace(node, items=tuple(_map_columns(x, fn) for x in node.items))
    if isinstance(node, FromClause):
        joins = tuple(Join(j.table, _map_columns(j.on, fn) if j.on else None)
                      for j in node.joins)
        return dc_replace(node, joins=joins)
    if isinstance(node, (WhereClause, HavingClause)):
        return dc_replace(node, condition=_map_columns(node.condition, fn))
    if isinstance(node, GroupClause):
        return dc_replace(node, keys=tuple(_map_columns(k, fn) for k in node.keys))
    if isinstance(node, OrderClause):
        return dc_replace(node, keys=tuple(
            OrderKey(_map_columns(k.expr, fn), k.direction) for k in node.keys))
    if isinstance(node, ColumnRef):
        return fn(node)
    if isinstance(node, FuncCall):
        return FuncCall(node.func, node.arg if isinstance(node.arg, Star) else fn(node.arg))
    if isinstance(node, Comparison):
        left = _map_columns(node.left, fn)
        right = node.right
        if isinstance(right, SelectCore):
            right = right.with_(items=tuple(_map_columns(x, fn) for x in right.items))
        elif not isinstance(right, (Literal, Compound)):
            right = _map_columns(right, fn)
        return Comparison(left, node.op, right)
    if isinstance(node, Between):
        return Between(_map_columns(node.left, fn), _map_columns(node.low, fn),
                       _map_columns(node.high, fn))
    if isinstance(node, BoolOp):
        return BoolOp(node.op, _map_columns(node.left, fn), _map_columns(node.right, fn))
    if isinstance(node, Not):
        return Not(_map_columns(node.operand, fn))
    return node


def _map_literals(node, fn):
    if isinstance(node, (WhereClause, HavingClause)):
        return dc_replace(node, condition=_map_literals(node.condition, fn))
    if isinstance(node, FromClause):
        joins = tuple(Join(j.table, _map_literals(j.on, fn) if j.on else None)
                      for j in node.joins)
        return dc_replace(node, joins=joins)
    if isinstance(node, OrderClause):
        if node.limit is None:
            return node
        new_limit = fn(Literal(node.limit, False))
        if new_limit.is_string or not isinstance(new_limit.value, int) or new_limit.value <= 0:
            raise EditError(f"LIMIT must be a positive integer, got {new_limit.value!r}")
        return dc_replace(node, limit=new_limit.value)
    if isinstance(node, Comparison):
        right = node.right
        if isinstance(right, Literal):
            right = fn(right)
        elif not isinstance(right, (SelectCore, Compound)):
            right = _map_literals(right, fn)
        left = fn(node.left) if isinstance(node.left, Literal) else node.left
        return Comparison(left, node.op, right)
    if isinstance(node, Between):
        def conv(x):
            return fn(x) if isinstance(x, Literal) else x
        return Between(conv(node.left), conv(node.low), conv(node.high))
    if isinstance(node, BoolOp):
        return BoolOp(node.op, _map_literals(node.left, fn), _map_literals(node.right, fn))
    if isinstance(node, Not):
        return Not(_map_literals(node.operand, fn))
    return node


def _map_tables(node, fn):
    if isinstance(node, FromClause):
        joins = tuple(Join(fn(j.table), _map_tables(j.on, fn) if j.on else None)
                      for j in node.joins)
        return dc_replace(node, from_table=fn(node.from_table) if node.from_table else None,
                          joins=joins)
    if isinstance(node, SelectClause):
        return dc_replace(node, items=tuple(_map_tables(x, fn) for x in node.items))
    if isinstance(node, (WhereClause, HavingClause)):
        return dc_replace(node, condition=_map_tables(node.condition, fn))
    if isinstance(node, GroupClause):
        return dc_replace(node, keys=tuple(_map_tables(k, fn) for k in node.keys))
    if isinstance(node, OrderClause):
        return dc_replace(node, keys=tuple(
            OrderKey(_map_tables(k.expr, fn), k.direction) for k in node.keys))
    if isinstance(node, ColumnRef):
        return ColumnRef(node.column, fn(node.table) if node.table else None)
    if isinstance(node, FuncCall):
        return FuncCall(node.func, _map_tables(node.arg, fn))
    if isinstance(node, Comparison):
        right = node.right
        if isinstance(right, SelectCore):
            right = right.with_(
                items=tuple(_map_tables(x, fn) for x in right.items),
                from_table=fn(right.from_table) if right.from_table else None,
            )
        elif not isinstance(right, (Literal, Compound)):
            right = _map_tables(right, fn)
        return Comparison(_map_tables(node.left, fn), node.op, right)
    if isinstance(node, Between):
        return Between(_map_tables(node.left, fn), _map_tables(node.low, fn),
                       _map_tables(node.high, fn))
    if isinstance(node, BoolOp):
        return BoolOp(node.op, _map_tables(node.left, fn), _map_tables(node.right, fn))
    if isinstance(node, Not):
        return Not(_map_tables(node.operand, fn))
    return node


def _apply_replace(clause: Clause, edit: AtomicEdit) -> Clause:
    old, new = edit.old, edit.new
    if old.cls == "column":
        _, old_col = _binding_column(old.binding or old.norm)
        new_table, new_col = _binding_column(new.binding or new.norm)
        box = _Box()

        def fn(ref: ColumnRef) -> ColumnRef:
            if box.done or ref.column.lower() != old_col.lower():
                return ref
            if box.count == edit.occurrence:
                box.done = True
                table = None
                if ref.table is not None:
                    table = new_table if new_table else ref.table
                return ColumnRef(new_col, table)
            box.count += 1
            return ref

        out = _map_columns(clause, fn)
        if not box.done:
            raise EditError(f"replacement target {old.binding!r} not found in clause")
        return out
    if old.cls == "table":
        found = {"hit": False}

        def tfn(name: str) -> str:
            if name.lower() == (old.binding or old.norm).lower():
                found["hit"] = True
                return new.binding or new.text
            return name

        out = _map_tables(clause, tfn)
        if not found["hit"]:
            raise EditError(f"replacement target {old.binding!r} not found in clause")
        return out
    # literal
    old_lex = old.binding if old.binding is not None else old.norm
    old_is_string = _strip_punct(old.text).startswith('"')
    box = _Box()

    def lfn(lit: Literal) -> Literal:
        if box.done or lit.is_string != old_is_string:
            return lit
        lex = str(lit.value) if lit.is_string else lit.text
        if lex != old_lex:
            return lit
        if box.count == edit.occurrence:
            box.done = True
            return _literal_from_chunk(new)
        box.count += 1
        return lit

    out = _map_literals(clause, lfn)
    if not box.done:
        raise EditError(f"replacement target {old_lex!r} not found in clause")
    return out


def _literal_from_chunk(c: Chunk) -> Literal:
    raw = _strip_punct(c.text)
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return Literal(raw[1:-1], True)
    lex = c.binding if c.binding is not None else raw
    if _NUMBER_RE.match(lex):
        value = float(lex) if "." in lex else int(lex)
        return Literal(value, False, lex)
    return Literal(lex, True)


def direct_transform(req: EditRequest, cls: EditClassification) -> Clause:
    """Apply the classified atomic edits to the original clause.

    Atomic edits are applied left-to-right in alignment order. Raises
    ``EditError`` when a precondition fails (column addition on a non-SELECT
    clause, removal emptying the SELECT list, replacement target missing).
    """
    if cls.kind == EditKind.NO_CHANGE:
        return req.clause
    if cls.kind == EditKind.COMPLEX:
        raise EditError("edit is not atomic; clause must be regenerated")
    clause = req.clause
    for edit in cls.edits:
        if edit.op == "REPLACE":
            clause = _apply_replace(clause, edit)
        elif edit.op == "ADD_COLUMN":
            if not isinstance(clause, SelectClause):
                raise EditError("can only add a column to a SELECT clause")
            _, col = _binding_column(edit.new.binding or edit.new.norm)
            clause = dc_replace(clause, items=clause.items + (ColumnRef(col),))
        elif edit.op == "REMOVE_COLUMN":
            if not isinstance(clause, SelectClause):
                raise EditError("can only remove a column from a SELECT clause")
            _, col = _binding_column(edit.old.binding or edit.old.norm)
            kept = tuple(x for x in clause.items
                         if not (isinstance(x, ColumnRef) and x.column.lower() == col.lower()))
            if len(kept) == len(clause.items):
                raise EditError(f"column {col!r} not found in SELECT list")
            if not kept:
                raise EditError("removal would empty the SELECT list")
            clause = dc_replace(clause, items=kept)
        else:
            raise EditError(f"unknown atomic edit {edit.op!r}")
    return clause
