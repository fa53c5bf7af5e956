"""Step-level edit application shared by the HTTP service, the CLI and the
refinement loop: classify the edit, transform directly when atomic, regenerate
the clause otherwise, then recompose the query."""

from __future__ import annotations

from .clausegen import (
    GenerationContext,
    OP_BY_PHRASE,
    RuleBasedGenerator,
    _elements,
    _parse_operand,
    _Stream,
    generate_clause,
)
from .compose import compose
from .decompose import Block, ClauseKind, CoreTree, copy_tree, decompose, node_at
from .editing import EditKind, EditRequest, align, chunk, classify_edit, direct_transform
from .errors import EditError, GenerationError, SessionError
from .explain import explain_query
from .schema import SchemaCatalog
from .ast_nodes import Query


def _core_context(core: CoreTree) -> tuple[str, ...]:
    from_clause = core.first(ClauseKind.FROM_JOIN_ON)
    return from_clause.tables() if from_clause is not None else ()


def _siblings(core: CoreTree) -> dict[ClauseKind, object]:
    out: dict[ClauseKind, object] = {}
    for clause in core.clauses:
        out.setdefault(clause.kind, clause)
    return out


def _parse_combine_edit(text: str, schema: SchemaCatalog,
                        context_tables: tuple[str, ...]):
    """Parse an edited membership/comparison combine line back into
    (left operand, operator)."""
    s = _Stream(_elements(text, schema, context_tables))
    if not (s.accept_words("keep the records where")
            or s.accept_words("keep the groups where")):
        raise GenerationError(f"cannot interpret combine step {text!r}")
    left = _parse_operand(s, schema)
    if s.accept_words("not in"):
        op = "NOT IN"
    elif s.accept_words("in"):
        op = "IN"
    else:
        op = None
        for phrase, candidate in OP_BY_PHRASE:
            if s.accept_words(phrase):
                op = candidate
                break
        if op is None:
            raise GenerationError(f"no membership or comparison phrase in {text!r}")
    label = s.current()
    if not (isinstance(label, str) and label.startswith("q") and label[1:].isdigit()):
        raise GenerationError(f"combine step must reference a query label: {text!r}")
    return left, op


def apply_step_edit(ast: Query, schema: SchemaCatalog, index: int, new_text: str,
                    generator=None) -> tuple[Query, str]:
    """Apply an edited step text; returns (new query, path taken) where path is
    "noop", "direct" or "generated"."""
    generator = generator or RuleBasedGenerator()
    tree = decompose(ast)
    explanation = explain_query(tree, schema)
    try:
        step = explanation.step(index)
    except IndexError:
        raise SessionError(f"no step {index}") from None
    if new_text.strip() == step.text.strip():
        return ast, "noop"
    if step.role == "marker":
        raise SessionError("query markers are structural and cannot be edited")

    tree = copy_tree(tree)
    node = node_at(tree, step.path)

    if step.role == "combine":
        if step.block_index is None:
            raise SessionError("the combining step of a compound query cannot be edited")
        context = _core_context(node)
        left, op = _parse_combine_edit(new_text, schema, context)
        old = node.blocks[step.block_index]
        node.blocks[step.block_index] = Block(old.origin, left, op, old.child)
        return compose(tree, schema), "generated"

    context = _core_context(node)
    c_o = chunk(step.text, schema, spans=step.spans, context_tables=context)
    c_n = chunk(new_text, schema, context_tables=context)
    classification = classify_edit(align(c_o, c_n))

    if classification.kind == EditKind.NO_CHANGE:
        return ast, "noop"

    new_clause = None
    path = "generated"
    if classification.kind == EditKind.ATOMIC:
        try:
            new_clause = direct_transform(
                EditRequest(step.text, new_text, step.clause), classification)
            path = "direct"
        except EditError:
            new_clause = None
    if new_clause is None:
        ctx = GenerationContext(schema, _siblings(node), position=index,
                                kind_hint=step.kind)
        new_clause = generate_clause(new_text, ctx, generator)

    for i, clause in enumerate(node.clauses):
        if clause is step.clause or (clause == step.clause and clause.kind == step.kind):
            if new_clause.kind == clause.kind:
                node.clauses[i] = new_clause
            else:
                del node.clauses[i]
                node.clauses.append(new_clause)
            break
    else:
        raise SessionError(f"step {index} does not map to a clause")
    return compose(tree, schema), path


def _resolve_target_core(tree, explanation, position: int) -> tuple:
    """Which core an inserted step at ``position`` belongs to: the left
    neighbor's core when it has one, else the right neighbor's."""
    candidates = []
    if position > 1:
        candidates.append(position - 1)
    candidates.append(position)
    for idx in candidates:
        try:
            step = explanation.step(idx)
        except IndexError:
            continue
        node = node_at(tree, step.path)
        if isinstance(node, CoreTree):
            return step.path
    if isinstance(tree, CoreTree):
        return ()
    raise SessionError(f"cannot resolve an insertion point at position {position}")


def insert_step(ast: Query, schema: SchemaCatalog, position: int, text: str,
                generator=None) -> Query:
    """Generate a clause from ``text`` and add it to the core owning the step
    position; composition merges or joins as needed."""
    generator = generator or RuleBasedGenerator()
    tree = decompose(ast)
    explanation = explain_query(tree, schema)
    if position < 1 or position > len(explanation.steps) + 1:
        raise SessionError(f"insert position {position} out of range")
    path = _resolve_target_core(tree, explanation, position)
    tree = copy_tree(tree)
    node = node_at(tree, path)
    ctx = GenerationContext(schema, _siblings(node), position=position)
    clause = generate_clause(text, ctx, generator)
    node.clauses.append(clause)
    return compose(tree, schema)


def delete_step(ast: Query, schema: SchemaCatalog, index: int) -> Query:
    """Remove the clause (or subquery block) behind a step."""
    tree = decompose(ast)
    explanation = explain_query(tree, schema)
    try:
        step = explanation.step(index)
    except IndexError:
        raise SessionError(f"no step {index}") from None
    if step.role == "marker":
        raise SessionError("query markers are structural and cannot be deleted")
    tree = copy_tree(tree)
    node = node_at(tree, step.path)
    if step.role == "combine":
        if step.block_index is None:
            raise SessionError("the combining step of a compound query cannot be deleted")
        del node.blocks[step.block_index]
        return compose(tree, schema)
    if step.kind == ClauseKind.SELECT:
        selects = [c for c in node.clauses if c.kind == ClauseKind.SELECT]
        if len(selects) <= 1:
            raise SessionError("cannot delete the only SELECT step: "
                               "the query must return something")
    for i, clause in enumerate(node.clauses):
        if clause is step.clause or (clause == step.clause and clause.kind == step.kind):
            del node.clauses[i]
            break
    else:
        raise SessionError(f"step {index} does not map to a clause")
    return compose(tree, schema)
