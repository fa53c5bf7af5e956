import random

from sqlrefine.ast_nodes import ColumnRef, Comparison, Literal, SelectCore, Star
from sqlrefine.decompose import (
    ClauseKind,
    CompoundTree,
    CoreTree,
    decompose,
    execution_order,
    max_block_depth,
)
from sqlrefine.parser import parse_sql
from sqlrefine.render import render_expr, render_sql

from query_gen import gen_query


def kinds(slots):
    return [(s.role, s.kind.value if s.kind else None) for s in slots]


def test_two_production_query(concert):
    tree = decompose(parse_sql("SELECT name FROM singer", concert))
    assert isinstance(tree, CoreTree)
    assert [c.kind for c in tree.clauses] == [ClauseKind.FROM_JOIN_ON, ClauseKind.SELECT]


def test_compound_becomes_child_trees(concert):
    tree = decompose(parse_sql(
        "SELECT name FROM singer INTERSECT SELECT name FROM singer WHERE age > 2",
        concert))
    assert isinstance(tree, CompoundTree)
    assert tree.op == "INTERSECT"
    assert isinstance(tree.left, CoreTree)
    assert isinstance(tree.right, CoreTree)


def test_scalar_subquery_stays_inline_when_simple(concert):
    tree = decompose(parse_sql(
        "SELECT name FROM singer WHERE age > (SELECT AVG(age) FROM singer)", concert))
    assert tree.blocks == []
    assert tree.first(ClauseKind.WHERE) is not None


def test_complex_scalar_subquery_becomes_block(concert):
    tree = decompose(parse_sql(
        "SELECT name FROM stadium WHERE capacity > "
        "(SELECT AVG(capacity) FROM stadium WHERE location = 'x')", concert))
    assert len(tree.blocks) == 1
    assert tree.first(ClauseKind.WHERE) is None
    assert tree.blocks[0].op == ">"
    assert isinstance(tree.blocks[0].child, CoreTree)


def test_membership_always_lifts(concert):
    tree = decompose(parse_sql(
        "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)",
        concert))
    assert len(tree.blocks) == 1
    assert tree.blocks[0].op == "IN"


def _leaf_multiset(obj, acc):
    """Column/literal leaves of an AST fragment, by rendering."""
    from sqlrefine.ast_nodes import Between, BoolOp, Comparison, FuncCall, Not
    from sqlrefine.decompose import (
        FromClause,
        GroupClause,
        HavingClause,
        OrderClause,
        SelectClause,
        WhereClause,
    )

    if obj is None:
        return
    if isinstance(obj, (ColumnRef, Literal)):
        acc.append(render_expr(obj))
    elif isinstance(obj, FuncCall):
        _leaf_multiset(obj.arg, acc)
    elif isinstance(obj, Comparison):
        _leaf_multiset(obj.left, acc)
        if isinstance(obj.right, SelectCore):
            for item in obj.right.items:
                _leaf_multiset(item, acc)
            acc.append(obj.right.from_table)
        else:
            _leaf_multiset(obj.right, acc)
    elif isinstance(obj, Not):
        _leaf_multiset(obj.operand, acc)
    elif isinstance(obj, BoolOp):
        _leaf_multiset(obj.left, acc)
        _leaf_multiset(obj.right, acc)
    elif isinstance(obj, Between):
        _leaf_multiset(obj.left, acc)
        _leaf_multiset(obj.low, acc)
        _leaf_multiset(obj.high, acc)
    elif isinstance(obj, SelectClause):
        for item in obj.items:
            _leaf_multiset(item, acc)
    elif isinstance(obj, FromClause):
        acc.extend(obj.tables())
        for join in obj.joins:
            _leaf_multiset(join.on, acc)
    elif isinstance(obj, (WhereClause, HavingClause)):
        _leaf_multiset(obj.condition, acc)
    elif isinstance(obj, GroupClause):
        for key in obj.keys:
            _leaf_multiset(key, acc)
    elif isinstance(obj, OrderClause):
        for key in obj.keys:
            _leaf_multiset(key.expr, acc)
        if obj.limit is not None:
            acc.append(str(obj.limit))


def _query_leaves(q, acc):
    from sqlrefine.ast_nodes import Compound

    if isinstance(q, Compound):
        _query_leaves(q.left, acc)
        _query_leaves(q.right, acc)
        return
    for item in q.items:
        _leaf_multiset(item, acc)
    if q.from_table:
        acc.append(q.from_table)
    for join in q.joins:
        acc.append(join.table)
        _leaf_multiset(join.on, acc)
    _leaf_multiset(q.where, acc)
    for key in q.group_by:
        _leaf_multiset(key, acc)
    _leaf_multiset(q.having, acc)
    for key in q.order_by:
        _leaf_multiset(key.expr, acc)
    if q.limit is not None:
        acc.append(str(q.limit))


def _tree_leaves(tree, acc):
    if isinstance(tree, CompoundTree):
        _tree_leaves(tree.left, acc)
        _tree_leaves(tree.right, acc)
        return
    for clause in tree.clauses:
        _leaf_multiset(clause, acc)
    for block in tree.blocks:
        _leaf_multiset(block.left, acc)
        _tree_leaves(block.child, acc)


def test_partition_property(schemas):
    # clauses are pairwise disjoint and jointly cover the query: the multiset
    # of column/literal/table leaves is preserved exactly
    rng = random.Random(7)
    for _ in range(200):
        schema = rng.choice(list(schemas.values()))
        q = gen_query(rng, schema)
        want, got = [], []
        _query_leaves(q, want)
        _tree_leaves(decompose(q), got)
        assert sorted(want) == sorted(got), render_sql(q)


def test_decompose_deterministic(concert):
    q = parse_sql("SELECT name FROM singer WHERE age > 30 ORDER BY age", concert)
    assert decompose(q) == decompose(q)


def test_execution_order_three_clauses(concert):
    tree = decompose(parse_sql("SELECT name FROM singer WHERE age > 30", concert))
    slots = execution_order(tree)
    assert kinds(slots) == [("clause", "FROM_JOIN_ON"), ("clause", "WHERE"),
                            ("clause", "SELECT")]


def test_execution_order_all_six(concert):
    tree = decompose(parse_sql(
        "SELECT country FROM singer WHERE age > 5 GROUP BY country "
        "HAVING COUNT(*) > 2 ORDER BY country LIMIT 3", concert))
    slots = execution_order(tree)
    assert [s.kind for s in slots] == [
        ClauseKind.FROM_JOIN_ON, ClauseKind.WHERE, ClauseKind.GROUP_BY,
        ClauseKind.HAVING, ClauseKind.SELECT, ClauseKind.ORDER_BY,
    ]


def test_execution_order_compound(concert):
    tree = decompose(parse_sql(
        "SELECT name FROM singer EXCEPT SELECT name FROM singer WHERE age > 2", concert))
    slots = execution_order(tree)
    roles = [s.role for s in slots]
    assert roles[0] == "marker"
    assert roles[-1] == "combine"
    assert slots[-1].combine_op == "EXCEPT"
    # first query's steps appear before the second marker
    second_marker = [i for i, s in enumerate(slots) if s.role == "marker"][1]
    assert all(s.path[:1] == ("L",) for s in slots[1:second_marker] if s.role == "clause")


def test_limit_fuses_into_order_by(concert):
    tree = decompose(parse_sql("SELECT name FROM singer ORDER BY age LIMIT 2", concert))
    order = tree.first(ClauseKind.ORDER_BY)
    assert order.limit == 2
    assert len(order.keys) == 1


def test_bare_limit_is_own_step(concert):
    tree = decompose(parse_sql("SELECT name FROM singer LIMIT 2", concert))
    order = tree.first(ClauseKind.ORDER_BY)
    assert order.keys == ()
    assert order.limit == 2


def test_block_depth_flag(concert):
    q = parse_sql("SELECT name FROM singer WHERE singer_id IN "
                  "(SELECT singer_id FROM singer_in_concert)", concert)
    assert max_block_depth(decompose(q)) == 1
    simple = parse_sql("SELECT name FROM singer", concert)
    assert max_block_depth(decompose(simple)) == 0
