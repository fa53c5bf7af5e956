import json

from sqlrefine.cli import main
from sqlrefine.decompose import decompose
from sqlrefine.explain import explain_query
from sqlrefine.parser import parse_sql
from sqlrefine.schema import from_benchmark_tables, load_schema

TABLES_ENTRY = {
    "db_id": "farm",
    "table_names_original": ["farm", "animal"],
    "table_names": ["farm", "animal"],
    "column_names_original": [
        [-1, "*"],
        [0, "farm_id"],
        [0, "total_horses"],
        [1, "animal_id"],
        [1, "farm_id"],
        [1, "animal_name"],
    ],
    "column_names": [
        [-1, "*"],
        [0, "farm id"],
        [0, "total horses"],
        [1, "animal id"],
        [1, "farm id"],
        [1, "animal name"],
    ],
    "column_types": ["text", "number", "number", "number", "number", "text"],
    "foreign_keys": [[4, 1]],
}


def test_convert_entry_round_trips_through_loader():
    doc = from_benchmark_tables(TABLES_ENTRY)
    catalog = load_schema(doc, schema_id=doc["schema_id"])
    assert [t.name for t in catalog.tables] == ["farm", "animal"]
    assert catalog.table("farm").column_names() == ("farm_id", "total_horses")
    fk = catalog.foreign_keys[0]
    assert (fk.from_table, fk.from_column, fk.to_table, fk.to_column) == \
        ("animal", "farm_id", "farm", "farm_id")
    assert catalog.readable("animal.animal_name") == "animal name"
    # the star pseudo-column never becomes a real column
    assert not catalog.table("farm").has_column("*")


def test_converted_schema_drives_the_pipeline():
    doc = from_benchmark_tables(TABLES_ENTRY)
    catalog = load_schema(doc, schema_id=doc["schema_id"])
    q = parse_sql("SELECT animal_name FROM animal WHERE animal_id > 5", catalog)
    texts = explain_query(decompose(q), catalog).texts()
    assert texts == [
        "In table animal",
        "Keep the records where the animal id is greater than 5",
        "Return the animal name",
    ]


def test_convert_schema_cli(tmp_path, capsys):
    tables = tmp_path / "tables.json"
    tables.write_text(json.dumps([TABLES_ENTRY]))
    out_dir = tmp_path / "schemas"
    code = main(["convert-schema", str(tables), "--out", str(out_dir)])
    assert code == 0
    written = json.loads((out_dir / "farm.json").read_text())
    assert written["tables"]["animal"][2] == ["animal_name", "text"]
    assert written["readable_names"]["animal.animal_name"] == "animal name"
