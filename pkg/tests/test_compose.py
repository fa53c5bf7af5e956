import random
from collections import deque

import pytest

from sqlrefine.ast_nodes import ColumnRef, Comparison, Literal, SelectCore, Star
from sqlrefine.compose import compose, dedupe_order_group, merge_same_level, rewrite_from_join
from sqlrefine.decompose import (
    ClauseKind,
    GroupClause,
    OrderClause,
    SelectClause,
    WhereClause,
    decompose,
)
from sqlrefine.errors import ComposeError
from sqlrefine.evaluate import exact_set_match
from sqlrefine.parser import parse_sql
from sqlrefine.render import render_sql

from query_gen import gen_query


def test_identity_composition(schemas, golden_corpus):
    for entry in golden_corpus:
        schema = schemas[entry["db_id"]]
        q = parse_sql(entry["sql"], schema)
        again = compose(decompose(q), schema)
        assert exact_set_match(again, q, schema), entry["sql"]


def test_where_referencing_missing_table_triggers_join(concert):
    tree = decompose(parse_sql("SELECT name FROM singer", concert))
    tree.clauses.append(WhereClause(
        Comparison(ColumnRef("theme", "concert"), "=", Literal("Party", True))))
    q = compose(tree, concert)
    text = render_sql(q)
    assert "JOIN singer_in_concert ON" in text
    assert "JOIN concert ON" in text
    assert parse_sql(text, concert)  # still a valid query


def test_two_where_clauses_merge_with_and(concert):
    tree = decompose(parse_sql("SELECT name FROM singer WHERE age > 10", concert))
    tree.clauses.append(WhereClause(
        Comparison(ColumnRef("age"), "<", Literal(50, False))))
    q = compose(tree, concert)
    assert render_sql(q) == "SELECT name FROM singer WHERE age > 10 AND age < 50"


def test_two_select_clauses_concatenate(concert):
    tree = decompose(parse_sql("SELECT name FROM singer", concert))
    tree.clauses.append(SelectClause((ColumnRef("age"), ColumnRef("name"))))
    q = compose(tree, concert)
    # union of the lists, order preserved, duplicates dropped
    assert render_sql(q) == "SELECT name, age FROM singer"


def test_single_where_unchanged(concert):
    q0 = parse_sql("SELECT name FROM singer WHERE age > 10", concert)
    assert render_sql(compose(decompose(q0), concert)) == render_sql(q0)


def test_two_order_by_keeps_first(concert):
    tree = decompose(parse_sql("SELECT name FROM singer ORDER BY age DESC", concert))
    tree.clauses.append(OrderClause((), 5))
    q = compose(tree, concert)
    assert render_sql(q) == "SELECT name FROM singer ORDER BY age DESC"


def test_two_group_by_keeps_first_and_revalidates(concert):
    tree = decompose(parse_sql("SELECT country FROM singer GROUP BY country", concert))
    tree.clauses.append(GroupClause((ColumnRef("age"),)))
    q = compose(tree, concert)
    text = render_sql(q)
    assert text == "SELECT country FROM singer GROUP BY country"
    assert parse_sql(text, concert)


def test_merge_dedupe_pure_list_level():
    select_a = SelectClause((ColumnRef("a"),))
    select_b = SelectClause((ColumnRef("b"), ColumnRef("a")))
    merged = merge_same_level([select_a, select_b])
    assert len(merged) == 1
    assert [c.column for c in merged[0].items] == ["a", "b"]

    order_a = OrderClause((), 1)
    order_b = OrderClause((), 9)
    group_a = GroupClause((ColumnRef("x"),))
    group_b = GroupClause((ColumnRef("y"),))
    kept = dedupe_order_group([order_a, group_a, order_b, group_b])
    assert kept == [order_a, group_a]


def test_rewrite_from_join_noop(concert):
    q = parse_sql(
        "SELECT singer.name FROM singer JOIN singer_in_concert "
        "ON singer.singer_id = singer_in_concert.singer_id", concert)
    assert rewrite_from_join(q, concert) == q


def test_rewrite_from_join_on_pairs_are_declared_fks(concert, pets):
    # every ON condition the repair adds must be a declared foreign key
    core = SelectCore(
        items=(ColumnRef("fname", "student"),),
        from_table="student",
        where=Comparison(ColumnRef("pettype", "pets"), "=", Literal("dog", True)),
    )
    out = rewrite_from_join(core, pets)
    declared = set(pets.fk_pairs())
    for join in out.joins:
        left = f"{join.on.left.table}.{join.on.left.column}"
        right = f"{join.on.right.table}.{join.on.right.column}"
        assert (left, right) in declared or (right, left) in declared


def test_rewrite_from_join_unjoinable(world):
    # no fk path between two unrelated standalone tables in a fresh schema
    from sqlrefine.schema import load_schema

    lonely = load_schema({
        "tables": {"a": [["x", "number"]], "b": [["y", "number"]]},
    }, schema_id="lonely")
    core = SelectCore(items=(Star(),), from_table="a",
                      where=Comparison(ColumnRef("y", "b"), ">", Literal(1, False)))
    with pytest.raises(ComposeError) as err:
        rewrite_from_join(core, lonely)
    assert "'b'" in str(err.value) and "'a'" in str(err.value)


def test_compose_empty_tree_rejected(concert):
    from sqlrefine.decompose import CoreTree

    with pytest.raises(ComposeError):
        compose(CoreTree(), concert)


def _bfs_distance(schema, sources, target):
    graph = {}
    for fk in schema.foreign_keys:
        graph.setdefault(fk.from_table, set()).add(fk.to_table)
        graph.setdefault(fk.to_table, set()).add(fk.from_table)
    seen = set(sources)
    queue = deque((s, 0) for s in sources)
    while queue:
        node, dist = queue.popleft()
        if node == target:
            return dist
        for neighbor in graph.get(node, ()):
            if neighbor not in seen:
                seen.add(neighbor)
                queue.append((neighbor, dist + 1))
    return None


def test_join_minimality(pets):
    # graph-search oracle: the repair adds exactly shortest-path-many tables
    core = SelectCore(
        items=(ColumnRef("fname", "student"),),
        from_table="student",
        where=Comparison(ColumnRef("pettype", "pets"), "=", Literal("dog", True)),
    )
    out = rewrite_from_join(core, pets)
    added = len(out.joins)
    assert added == _bfs_distance(pets, ["student"], "pets") == 2


def test_syntactic_soundness_random(schemas):
    # whatever tree shape decompose produces, the composed text re-parses
    rng = random.Random(5150)
    for _ in range(150):
        schema = rng.choice(list(schemas.values()))
        q = gen_query(rng, schema)
        text = render_sql(compose(decompose(q), schema))
        parse_sql(text, schema)
