"""Automated user simulation and the end-to-end refinement loop.

The simulated user compares the working query against the gold query clause by
clause (after decomposition) and emits explanation edits: the explanation of an
extra clause is deleted, a missing clause's explanation is generated from the
gold clause (optionally paraphrased) and inserted at its execution-order
position, and an inconsistent clause's explanation is replaced. Compound-shape
or subquery-block mismatches between the two queries are recorded as
structural and left for the metrics to report.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace as dc_replace

from .ast_nodes import (
    ColumnRef,
    Comparison,
    Compound,
    Literal,
    OrderKey,
    Query,
    SelectCore,
)
from .decompose import (
    EXECUTION_ORDER,
    ClauseKind,
    ClauseTree,
    CompoundTree,
    CoreTree,
    decompose,
)
from .errors import GenerationError, RemoteBackendError, SqlRefineError
from .evaluate import MatchReport, _core_components, _norm_expr, component_match
from .explain import Explanation, explain_query, paraphrase
from .parser import parse_sql
from .pipeline import apply_step_edit, delete_step, insert_step
from .render import render_sql
from .schema import SchemaCatalog

_EXEC_RANK = {kind: i for i, kind in enumerate(EXECUTION_ORDER)}


@dataclass(frozen=True)
class SimEdit:
    op: str  # replace | delete | insert
    index: int  # step index (replace/delete) or insertion position (insert)
    text: str | None = None
    kind: ClauseKind | None = None


@dataclass
class RoundTrace:
    edits: list[SimEdit] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    sql_after: str | None = None


@dataclass
class SimulationTrace:
    rounds: list[RoundTrace] = field(default_factory=list)
    converged: bool = False
    structural_mismatch: bool = False
    final_sql: str | None = None
    report: MatchReport | None = None

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)

    def to_dict(self) -> dict:
        return {
            "rounds": [
                {
                    "edits": [
                        {"op": e.op, "index": e.index, "text": e.text,
                         "kind": e.kind.value if e.kind else None}
                        for e in r.edits
                    ],
                    "errors": r.errors,
                    "sql_after": r.sql_after,
                }
                for r in self.rounds
            ],
            "converged": self.converged,
            "structural_mismatch": self.structural_mismatch,
            "final_sql": self.final_sql,
            "components": self.report.components if self.report else None,
        }


# -- clause-level diff -------------------------------------------------------


def _clause_norm(core: CoreTree, kind: ClauseKind, schema: SchemaCatalog):
    """Normalized form of one clause of a decomposed core (blocks excluded)."""
    from .decompose import (
        FromClause,
        GroupClause,
        HavingClause,
        OrderClause,
        SelectClause,
        WhereClause,
    )
    from .evaluate import _conjunct_set

    clause = core.first(kind)
    if clause is None:
        return None
    from_clause = core.first(ClauseKind.FROM_JOIN_ON)
    tables = from_clause.tables() if from_clause is not None else ()
    if isinstance(clause, SelectClause):
        return (clause.distinct,
                frozenset(_norm_expr(x, tables, schema) for x in clause.items))
    if isinstance(clause, FromClause):
        return frozenset(t.lower() for t in clause.tables())
    if isinstance(clause, (WhereClause, HavingClause)):
        return _conjunct_set(clause.condition, tables, schema)
    if isinstance(clause, GroupClause):
        return frozenset(_norm_expr(k, tables, schema) for k in clause.keys)
    if isinstance(clause, OrderClause):
        return (tuple((_norm_expr(k.expr, tables, schema), k.direction or "ASC")
                      for k in clause.keys), clause.limit)
    raise TypeError(f"unexpected clause {clause!r}")


@dataclass
class _PlannedEdits:
    replaces: list[tuple[int, str, ClauseKind | None]] = field(default_factory=list)
    deletes: list[tuple[int, ClauseKind | None]] = field(default_factory=list)
    inserts: list[tuple[int | None, str, ClauseKind | None]] = field(default_factory=list)
    # block-level repairs collapse/expand several presentation steps at once,
    # so at most one is applied per round (the loop re-diffs afterwards)
    block_deletes: list[int] = field(default_factory=list)
    block_inserts: list[tuple[str, ClauseKind]] = field(default_factory=list)
    structural: bool = False


def _steps_by_slot(explanation: Explanation):
    clause_steps: dict[tuple, int] = {}
    combine_steps: dict[tuple, int] = {}
    for step in explanation.steps:
        if step.role == "clause":
            clause_steps[(step.path, step.kind)] = step.index
        elif step.role == "combine" and step.block_index is not None:
            combine_steps[(step.path, step.block_index)] = step.index
    return clause_steps, combine_steps


def _gold_texts(explanation: Explanation, rng: random.Random | None):
    texts: dict[tuple, str] = {}
    for step in explanation.steps:
        if step.role == "clause":
            key = ("clause", step.path, step.kind)
        elif step.role == "combine" and step.block_index is not None:
            key = ("combine", step.path, step.block_index)
        else:
            continue
        text = step.text
        if rng is not None:
            text = paraphrase(step, rng=rng).text
        texts[key] = text
    return texts


def _walk_diff(pred_node: ClauseTree, gold_node: ClauseTree, path: tuple,
               schema: SchemaCatalog, pred_ex: Explanation,
               gold_texts: dict, plan: _PlannedEdits) -> None:
    if isinstance(pred_node, CompoundTree) or isinstance(gold_node, CompoundTree):
        if not (isinstance(pred_node, CompoundTree) and isinstance(gold_node, CompoundTree)
                and pred_node.op == gold_node.op):
            plan.structural = True
            return
        _walk_diff(pred_node.left, gold_node.left, path + ("L",), schema,
                   pred_ex, gold_texts, plan)
        _walk_diff(pred_node.right, gold_node.right, path + ("R",), schema,
                   pred_ex, gold_texts, plan)
        return

    clause_steps, combine_steps = _steps_by_slot(pred_ex)
    core_steps = [s for s in pred_ex.steps if s.role == "clause" and s.path == path]

    for kind in EXECUTION_ORDER:
        pred_norm = _clause_norm(pred_node, kind, schema)
        gold_norm = _clause_norm(gold_node, kind, schema)
        if pred_norm is None and gold_norm is None:
            continue
        if pred_norm is not None and gold_norm is None:
            if kind == ClauseKind.SELECT:
                # a query must keep returning something: replace instead
                plan.structural = True
                continue
            plan.deletes.append((clause_steps[(path, kind)], kind))
        elif pred_norm is None and gold_norm is not None:
            anchor = None
            for step in core_steps:
                if _EXEC_RANK[step.kind] > _EXEC_RANK[kind]:
                    anchor = step.index
                    break
            if anchor is None and core_steps:
                anchor = core_steps[-1].index + 1
            plan.inserts.append((anchor, gold_texts[("clause", path, kind)], kind))
        elif pred_norm != gold_norm:
            plan.replaces.append(
                (clause_steps[(path, kind)], gold_texts[("clause", path, kind)], kind))

    for i, (pb, gb) in enumerate(zip(pred_node.blocks, gold_node.blocks)):
        if pb.origin != gb.origin:
            plan.structural = True
            continue
        tables = ()
        fc = pred_node.first(ClauseKind.FROM_JOIN_ON)
        if fc is not None:
            tables = fc.tables()
        pred_ref = (_norm_expr(pb.left, tables, schema), pb.op)
        gold_tables = ()
        gfc = gold_node.first(ClauseKind.FROM_JOIN_ON)
        if gfc is not None:
            gold_tables = gfc.tables()
        gold_ref = (_norm_expr(gb.left, gold_tables, schema), gb.op)
        if pred_ref != gold_ref:
            plan.replaces.append(
                (combine_steps[(path, i)], gold_texts[("combine", path, i)], None))
        _walk_diff(pb.child, gb.child, path + (("B", i),), schema,
                   pred_ex, gold_texts, plan)
    for i in range(len(gold_node.blocks), len(pred_node.blocks)):
        # extra subquery block: deleting its combine step removes it whole
        plan.block_deletes.append(combine_steps[(path, i)])
    for i in range(len(pred_node.blocks), len(gold_node.blocks)):
        text = _inline_block_text(gold_node, gold_node.blocks[i], schema)
        if text is None:
            plan.structural = True
        else:
            plan.block_inserts.append((text, gold_node.blocks[i].origin))


def _inline_block_text(gold_core: CoreTree, block, schema: SchemaCatalog) -> str | None:
    """Single-step text for a whole missing subquery block.

    A simple subquery is spelled inline verbatim ("... not in the {col} in
    table {T}"). A complex one is approximated by its bare SELECT+FROM; the
    next round's diff then descends into the inserted block and repairs the
    missing inner clauses step by step.
    """
    from .ast_nodes import Comparison as Cmp
    from .compose import compose
    from .decompose import (
        FromClause,
        HavingClause as HC,
        SelectClause,
        WhereClause as WC,
        _subquery_is_inline,
    )
    from .explain import explain_clause

    try:
        sub = compose(block.child, schema)
    except SqlRefineError:
        return None
    if not (isinstance(sub, SelectCore) and _subquery_is_inline(sub)):
        if isinstance(block.child, CompoundTree):
            return None
        child_select = block.child.first(ClauseKind.SELECT)
        child_from = block.child.first(ClauseKind.FROM_JOIN_ON)
        if not (isinstance(child_select, SelectClause)
                and isinstance(child_from, FromClause) and child_from.from_table):
            return None
        child_where = block.child.first(ClauseKind.WHERE)
        where = child_where.condition if isinstance(child_where, WC) else None
        sub = SelectCore(items=child_select.items[:1],
                         distinct=child_select.distinct,
                         from_table=child_from.from_table,
                         where=where)
        if _subquery_is_inline(sub):
            # the approximation would stay inline and never become a block:
            # inserting it again each round makes no progress
            return None
    conjunct = Cmp(block.left, block.op, sub)
    clause = HC(conjunct) if block.origin == ClauseKind.HAVING else WC(conjunct)
    fc = gold_core.first(ClauseKind.FROM_JOIN_ON)
    context = fc.tables() if fc is not None else ()
    return explain_clause(clause, schema, context).text


def _linearize(plan: _PlannedEdits, total_steps: int) -> list[SimEdit]:
    """Order the planned edits and convert to emission-time step indices."""
    working = list(range(1, total_steps + 1))
    edits: list[SimEdit] = []
    for orig, text, kind in sorted(plan.replaces):
        edits.append(SimEdit("replace", working.index(orig) + 1, text, kind))
    deleted = {orig for orig, _ in plan.deletes}
    for orig, kind in sorted(plan.deletes, reverse=True):
        edits.append(SimEdit("delete", working.index(orig) + 1, kind=kind))
        working.remove(orig)
    for anchor, text, kind in sorted(plan.inserts,
                                     key=lambda x: x[0] if x[0] is not None else 10 ** 9):
        while anchor is not None and anchor in deleted:
            anchor += 1
        if anchor is not None and anchor in working:
            pos = working.index(anchor) + 1
        else:
            pos = len(working) + 1
        edits.append(SimEdit("insert", pos, text, kind))
        working.insert(pos - 1, -1)  # placeholder for the inserted step
    # one block repair per round: it expands/collapses several steps, which
    # would invalidate any indices emitted after it
    if plan.block_deletes:
        orig = sorted(plan.block_deletes)[0]
        if orig in working:
            edits.append(SimEdit("delete", working.index(orig) + 1))
    elif plan.block_inserts:
        text, kind = plan.block_inserts[0]
        edits.append(SimEdit("insert", len(working) + 1, text, kind))
    return edits


def simulate_feedback(pred: Query, gold: Query, schema: SchemaCatalog,
                      paraphrase_on: bool = False,
                      seed: int | None = 0) -> tuple[list[SimEdit], bool]:
    """One round of simulated feedback: the edit script a perfect user would
    emit against the current explanation, plus a structural-mismatch flag."""
    pred_tree = decompose(pred)
    gold_tree = decompose(gold)
    pred_ex = explain_query(pred_tree, schema)
    gold_ex = explain_query(gold_tree, schema)
    rng = random.Random(seed) if paraphrase_on else None
    gold_texts = _gold_texts(gold_ex, rng)
    plan = _PlannedEdits()
    _walk_diff(pred_tree, gold_tree, (), schema, pred_ex, gold_texts, plan)
    return _linearize(plan, len(pred_ex.steps)), plan.structural


# -- backends ------------------------------------------------------------------


class LiteralBackend:
    """Parses the question text as SQL directly; the testing stub."""

    name = "stub"

    def __call__(self, question: str, schema: SchemaCatalog) -> Query:
        return parse_sql(question, schema)


class RemoteTextToSql:
    """HTTP text-to-SQL backend: POST {question, schema_id} -> {sql}."""

    name = "remote"

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def __call__(self, question: str, schema: SchemaCatalog) -> Query:
        import json
        import urllib.error
        import urllib.request

        req = urllib.request.Request(
            self.base_url,
            data=json.dumps({"question": question, "schema_id": schema.schema_id}).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raise RemoteBackendError(f"text-to-SQL backend returned {exc.code}",
                                     retryable=exc.code >= 500) from None
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise RemoteBackendError(f"text-to-SQL backend unreachable: {exc}") from None
        if not isinstance(body, dict) or "sql" not in body:
            raise RemoteBackendError("text-to-SQL response missing 'sql'", retryable=False)
        return parse_sql(str(body["sql"]), schema)


class CorruptingBackend:
    """Returns the gold query with 1-3 clauses randomly dropped/altered/added;
    the stub used to measure refinement convergence."""

    name = "corrupted-gold"

    def __init__(self, gold: Query, rng: random.Random):
        self.gold = gold
        self.rng = rng

    def __call__(self, question: str, schema: SchemaCatalog) -> Query:
        return corrupt_query(self.gold, schema, self.rng)


def _walk_cores(q: Query, visit) -> Query:
    """Rebuild a query applying visit(core) -> core to every select core in
    pre-order, subqueries included."""
    from .ast_nodes import BoolOp, Not

    if isinstance(q, Compound):
        return Compound(q.op, _walk_cores(q.left, visit), _walk_cores(q.right, visit))
    core = visit(q)

    def fix(c):
        if c is None:
            return None
        if isinstance(c, BoolOp):
            return BoolOp(c.op, fix(c.left), fix(c.right))
        if isinstance(c, Not):
            return Not(fix(c.operand))
        if isinstance(c, Comparison) and isinstance(c.right, (SelectCore, Compound)):
            return Comparison(c.left, c.op, _walk_cores(c.right, visit))
        return c

    return core.with_(where=fix(core.where), having=fix(core.having))


def _cores_of(q: Query) -> list[SelectCore]:
    cores: list[SelectCore] = []

    def visit(core: SelectCore) -> SelectCore:
        cores.append(core)
        return core

    _walk_cores(q, visit)
    return cores


def _replace_nth_core(q: Query, n: int, new_core: SelectCore) -> Query:
    counter = [0]

    def visit(core: SelectCore) -> SelectCore:
        out = new_core if counter[0] == n else core
        counter[0] += 1
        return out

    return _walk_cores(q, visit)


def _column_type(schema: SchemaCatalog, table: str, column: str) -> str:
    t = schema.table(table)
    for name, tag in t.columns:
        if name.lower() == column.lower():
            return tag
    return "text"


def _literal_for(schema: SchemaCatalog, table: str, column: str,
                 rng: random.Random) -> Literal:
    if "num" in _column_type(schema, table, column).lower():
        return Literal(rng.randint(1, 50), False)
    return Literal(rng.choice(["alpha", "beta", "gamma"]), True)


def _mutations(core: SelectCore, schema: SchemaCatalog, rng: random.Random):
    """Applicable single-clause corruptions of one select core."""
    out = []
    tables = core.tables()
    columns = [(t, c) for t in tables for c, _ in schema.table(t).columns]

    def pick_column():
        t, c = rng.choice(columns)
        return ColumnRef(c, t if len(tables) > 1 else None)

    if core.where is not None:
        out.append(lambda: core.with_(where=None))
    if core.order_by or core.limit is not None:
        out.append(lambda: core.with_(order_by=(), limit=None))
    if core.group_by:
        out.append(lambda: core.with_(group_by=()))
    if core.having is not None:
        out.append(lambda: core.with_(having=None))
    if len(core.items) > 1:
        out.append(lambda: core.with_(items=core.items[:-1]))
    selected = {x.column.lower() for x in core.items if isinstance(x, ColumnRef)}
    fresh = [(t, c) for t, c in columns if c.lower() not in selected]
    if fresh:
        def pick_fresh():
            t, c = rng.choice(fresh)
            return ColumnRef(c, t if len(tables) > 1 else None)

        out.append(lambda: core.with_(items=core.items + (pick_fresh(),)))
        out.append(lambda: core.with_(items=(pick_fresh(),) + core.items[1:]))
    if columns:
        if core.where is None:
            def add_where():
                t, c = rng.choice(columns)
                return core.with_(where=Comparison(
                    ColumnRef(c, t if len(tables) > 1 else None), ">",
                    _literal_for(schema, t, c, rng)))
            out.append(add_where)
        if not core.order_by:
            out.append(lambda: core.with_(order_by=(OrderKey(pick_column(), "DESC"),)))
        if not core.group_by:
            out.append(lambda: core.with_(group_by=(pick_column(),)))
    if core.order_by:
        def flip_direction():
            key = core.order_by[0]
            flipped = "ASC" if key.direction == "DESC" else "DESC"
            return core.with_(order_by=(OrderKey(key.expr, flipped),) + core.order_by[1:])
        out.append(flip_direction)
    if core.limit is not None:
        out.append(lambda: core.with_(limit=core.limit + rng.randint(1, 5)))
    out.append(lambda: core.with_(distinct=not core.distinct))
    return out


def corrupt_query(gold: Query, schema: SchemaCatalog, rng: random.Random,
                  max_attempts: int = 12) -> Query:
    for _ in range(max_attempts):
        pred = gold
        for _ in range(rng.randint(1, 3)):
            cores = _cores_of(pred)
            idx = rng.randrange(len(cores))
            mutations = _mutations(cores[idx], schema, rng)
            if not mutations:
                continue
            mutated = rng.choice(mutations)()
            pred = _replace_nth_core(pred, idx, mutated)
        try:
            # corrupted queries must still decompose/compose cleanly
            from .compose import compose

            render_sql(compose(decompose(pred), schema))
        except SqlRefineError:
            continue
        if not component_match(pred, gold, schema).overall:
            return pred
    return gold


# -- refinement loop -------------------------------------------------------------


def evaluate_corpus(items: list[dict], schemas: dict[str, SchemaCatalog],
                    generator=None, rounds: int = 3, paraphrase_on: bool = False,
                    seed: int = 0, backend_factory=None, executor=None,
                    workers: int = 8):
    """Run the refinement loop over a corpus of {question, gold_sql, db_id,
    difficulty} items and aggregate exact-set-match accuracy per tier.

    Items are evaluated concurrently; determinism comes from per-item seeds
    derived from the corpus seed and the item position.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .clausegen import RuleBasedGenerator
    from .evaluate import AccuracyReport

    generator = generator or RuleBasedGenerator()
    report = AccuracyReport()

    def backend_for(item, schema, rng):
        if backend_factory is not None:
            return backend_factory(item, schema, rng)
        gold = parse_sql(item["gold_sql"], schema)
        return CorruptingBackend(gold, rng)

    def run_one(pos_item):
        pos, item = pos_item
        item_seed = seed + pos * 1000003
        schema = schemas.get(item.get("db_id"))
        if schema is None:
            return pos, item, None, f"unknown db_id {item.get('db_id')!r}"
        try:
            gold = parse_sql(item["gold_sql"], schema)
            backend = backend_for(item, schema, random.Random(item_seed))
            trace = run_refinement_loop(item.get("question", ""), gold, backend,
                                        generator, schema, max_rounds=rounds,
                                        paraphrase_on=paraphrase_on, seed=item_seed)
            return pos, item, trace, None
        except SqlRefineError as exc:
            return pos, item, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run_one, enumerate(items)))

    for pos, item, trace, error in sorted(results):
        tier = item.get("difficulty", "unknown")
        correct = trace is not None and trace.converged
        report.record(tier, correct)
        if executor is not None and trace is not None and trace.final_sql:
            schema = schemas[item["db_id"]]
            try:
                gold = parse_sql(item["gold_sql"], schema)
                pred = parse_sql(trace.final_sql, schema)
                report.record_exec(tier, executor.equivalent(pred, gold))
            except SqlRefineError:
                report.record_exec(tier, False)
        if not correct:
            report.failures.append({
                "question": item.get("question"),
                "db_id": item.get("db_id"),
                "gold_sql": item.get("gold_sql"),
                "final_sql": trace.final_sql if trace else None,
                "error": error,
                "mismatched": trace.report.mismatched() if trace and trace.report else None,
            })
    return report


def run_refinement_loop(question: str, gold: Query, text_to_sql, generator,
                        schema: SchemaCatalog, max_rounds: int = 3,
                        paraphrase_on: bool = False,
                        seed: int | None = 0) -> SimulationTrace:
    """Initial query from the backend, then explain -> simulated edits ->
    apply -> recompose until exact set match or the round budget runs out."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    trace = SimulationTrace()
    try:
        pred = text_to_sql(question, schema)
    except SqlRefineError as exc:
        trace.rounds.append(RoundTrace(errors=[f"backend failed: {exc}"]))
        return trace

    report = component_match(pred, gold, schema)
    for round_no in range(max_rounds):
        if report.overall:
            break
        round_trace = RoundTrace()
        trace.rounds.append(round_trace)
        round_seed = None if seed is None else seed + round_no * 7919
        edits, structural = simulate_feedback(pred, gold, schema,
                                              paraphrase_on, round_seed)
        trace.structural_mismatch = trace.structural_mismatch or structural
        if not edits:
            round_trace.errors.append("no applicable edits (structural mismatch)")
            break
        round_trace.edits = edits
        for edit in edits:
            try:
                if edit.op == "replace":
                    pred, _ = apply_step_edit(pred, schema, edit.index, edit.text,
                                              generator)
                elif edit.op == "delete":
                    pred = delete_step(pred, schema, edit.index)
                else:
                    pred = insert_step(pred, schema, edit.index, edit.text, generator)
            except SqlRefineError as exc:
                round_trace.errors.append(f"{edit.op} at {edit.index}: {exc}")
                break
        round_trace.sql_after = render_sql(pred)
        report = component_match(pred, gold, schema)

    trace.converged = report.overall
    trace.final_sql = render_sql(pred)
    trace.report = report
    return trace
