from __future__ import annotations

import pytest

from obliq.errors import SqlSyntaxError
from obliq.predicate import TRUE, And, Cmp, Not, Or
from obliq.sql import (
    AggCall,
    Assign,
    ColRef,
    ColumnDef,
    CreateTable,
    Delete,
    DropTable,
    Insert,
    JoinClause,
    Select,
    Star,
    Update,
    parse_sql,
    split_statements,
)


def test_filter_aggregate_shape():
    st = parse_sql("SELECT COUNT(*) FROM r WHERE pageRank > 1000")
    assert st == Select((AggCall("count"),), "r", where=Cmp("pageRank", ">", 1000))


def test_group_by_with_aggregate():
    st = parse_sql("SELECT a, SUM(b), avg(b) FROM t GROUP BY a")
    assert st.group_by == "a"
    assert st.items == (ColRef("a"), AggCall("sum", "b"), AggCall("avg", "b"))


def test_create_table_options():
    st = parse_sql("CREATE TABLE t (a INT, d DATE, s TEXT(5), u TEXT) WITH STORAGE = BOTH(a), CAPACITY = 9")
    assert st == CreateTable(
        "t",
        (ColumnDef("a", "int"), ColumnDef("d", "date"), ColumnDef("s", "text", 5), ColumnDef("u", "text", 16)),
        "both", "a", 9,
    )
    assert parse_sql("CREATE TABLE t (a INT)") == CreateTable("t", (ColumnDef("a", "int"),))
    assert parse_sql("create table t (a int) with storage = index(a)").storage == "index"


def test_insert_many_rows():
    assert parse_sql("INSERT INTO t VALUES (1, 'x'), (-3, 'it''s')") == Insert("t", ((1, "x"), (-3, "it's")))


def test_update_assignments():
    st = parse_sql("UPDATE t SET v = v + 1, s = 'x' WHERE id BETWEEN 1 AND 3")
    assert st == Update(
        "t",
        (Assign("v", 1, "v", "+"), Assign("s", "x")),
        And((Cmp("id", ">=", 1), Cmp("id", "<=", 3))),
    )


def test_delete_without_where_matches_everything():
    assert parse_sql("DELETE FROM t") == Delete("t", TRUE)


def test_drop():
    assert parse_sql("DROP TABLE t;") == DropTable("t")


def test_join_and_hints():
    st = parse_sql("SELECT /*+ HASH_JOIN */ t.a, * FROM t JOIN u ON t.a = u.b")
    assert st.join == JoinClause("u", "t.a", "u.b")
    assert st.items == (ColRef("t.a"), Star())
    assert st.hints == ("hash_join",)


def test_predicate_forms():
    st = parse_sql("SELECT * FROM t WHERE NOT (a <> 3) OR 5 < v AND d = DATE '2000-01-02'")
    assert st.where == Or((
        Not(Cmp("a", "!=", 3)),
        And((Cmp("v", ">", 5), Cmp("d", "=", "2000-01-02"))),
    ))


def test_column_may_be_named_date():
    assert parse_sql("SELECT date FROM t WHERE date > DATE '1900-01-01'").items == (ColRef("date"),)


def test_comments_are_ignored():
    assert parse_sql("SELECT a -- the key\nFROM t") == Select((ColRef("a"),), "t")


@pytest.mark.parametrize(
    "text, pos",
    [
        ("", 0),
        ("   ", 0),
        ("SELECT * FROM t WHERE a = ", 26),
        ("SELECT * FROM t extra", 16),
        ("INSERT INTO t VALUES (1", 23),
    ],
)
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(SqlSyntaxError) as e:
        parse_sql(text)
    assert e.value.position == pos


def test_split_statements_drops_empties():
    assert split_statements("a; b;; c") == ["a", "b", "c"]
    assert split_statements("SELECT ';' FROM t; x") == ["SELECT ';' FROM t", "x"]
