"""Schema catalogs: tables, columns, foreign keys and readable-name mapping.

Schema documents are JSON files shaped like::

    {
      "tables": {
        "singer": [["singer_id", "number"], ["name", "text"], ...],
        "concert": [...]
      },
      "foreign_keys": [["concert.stadium_id", "stadium.stadium_id"], ...],
      "readable_names": {"concert.stadium_id": "stadium id", "concert": "concert"}
    }

Identifiers are case-insensitive and canonicalized to the spelling used in the
document. ``readable_names`` keys are either a bare table name or a dotted
``table.column`` pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError, ResolutionError


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[tuple[str, str], ...]  # (column name, declared type tag)

    def column_names(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.columns)

    def has_column(self, name: str) -> bool:
        low = name.lower()
        return any(c.lower() == low for c, _ in self.columns)


@dataclass(frozen=True)
class ForeignKey:
    from_table: str
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class SchemaCatalog:
    schema_id: str
    tables: tuple[Table, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()
    readable_names: dict[str, str] = field(default_factory=dict)

    # -- lookups -----------------------------------------------------------

    def table(self, name: str) -> Table | None:
        low = name.lower()
        for t in self.tables:
            if t.name.lower() == low:
                return t
        return None

    def canonical_table(self, name: str) -> str:
        t = self.table(name)
        if t is None:
            raise ResolutionError(f"unknown table: {name}", name)
        return t.name

    def canonical_column(self, table: str, column: str) -> str:
        t = self.table(table)
        if t is None:
            raise ResolutionError(f"unknown table: {table}", table)
        low = column.lower()
        for c, _ in t.columns:
            if c.lower() == low:
                return c
        raise ResolutionError(f"unknown column: {table}.{column}", f"{table}.{column}")

    def tables_with_column(self, column: str) -> list[str]:
        return [t.name for t in self.tables if t.has_column(column)]

    def readable(self, entity: str) -> str:
        """Display phrase for a table or dotted table.column; raw name if unmapped."""
        low = entity.lower()
        for key, phrase in self.readable_names.items():
            if key.lower() == low:
                return phrase
        if "." in entity:
            table, column = entity.split(".", 1)
            if self.table(table) is None:
                raise ResolutionError(f"unknown entity: {entity}", entity)
            return self.canonical_column(table, column)
        if self.table(entity) is None:
            raise ResolutionError(f"unknown entity: {entity}", entity)
        return self.canonical_table(entity)

    def fk_pairs(self) -> list[tuple[str, str]]:
        return [
            (f"{fk.from_table}.{fk.from_column}", f"{fk.to_table}.{fk.to_column}")
            for fk in self.foreign_keys
        ]


def readable_name(entity: str, schema: SchemaCatalog) -> str:
    return schema.readable(entity)


def from_benchmark_tables(doc: dict) -> dict:
    """Convert one entry of the common text-to-SQL benchmark metadata format
    (table_names_original / column_names_original / column_types /
    foreign_keys with column indices) into this package's schema document.

    The humanized ``table_names`` / ``column_names`` become readable names.
    """
    tables_orig = doc["table_names_original"]
    tables_read = doc.get("table_names", tables_orig)
    cols_orig = doc["column_names_original"]
    cols_read = doc.get("column_names", cols_orig)
    types = doc.get("column_types", ["text"] * len(cols_orig))

    tables: dict[str, list[list[str]]] = {name: [] for name in tables_orig}
    readable: dict[str, str] = {}
    for orig, read in zip(tables_orig, tables_read):
        if read and read != orig:
            readable[orig] = read
    for i, (t_idx, col) in enumerate(cols_orig):
        if t_idx < 0:  # the "*" pseudo-column
            continue
        table = tables_orig[t_idx]
        tables[table].append([col, types[i] if i < len(types) else "text"])
        read = cols_read[i][1] if i < len(cols_read) else col
        if read and read != col:
            readable[f"{table}.{col}"] = read

    def dotted(col_idx: int) -> str:
        t_idx, col = cols_orig[col_idx]
        return f"{tables_orig[t_idx]}.{col}"

    fks = [[dotted(a), dotted(b)] for a, b in doc.get("foreign_keys", [])]
    out: dict = {"schema_id": doc.get("db_id", "schema"), "tables": tables,
                 "foreign_keys": fks}
    if readable:
        out["readable_names"] = readable
    return out


def _split_dotted(ref: str, location: str) -> tuple[str, str]:
    parts = ref.split(".")
    if len(parts) != 2 or not all(parts):
        raise SchemaError(f"expected table.column reference, got {ref!r}", location)
    return parts[0], parts[1]


def load_schema(source: str | Path | dict, schema_id: str | None = None) -> SchemaCatalog:
    """Load and validate a schema document (path, JSON text, or parsed dict)."""
    if isinstance(source, dict):
        doc = source
        sid = schema_id or str(doc.get("schema_id", "schema"))
    else:
        path = Path(source)
        if path.exists():
            raw = path.read_text(encoding="utf-8")
            sid = schema_id or path.stem
        else:
            raw = str(source)
            sid = schema_id or "schema"
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"malformed schema document: {exc}", "document") from None
    if not isinstance(doc, dict) or "tables" not in doc:
        raise SchemaError("schema document must be an object with a 'tables' key", "document")

    tables: list[Table] = []
    seen_tables: set[str] = set()
    raw_tables = doc["tables"]
    if not isinstance(raw_tables, dict):
        raise SchemaError("'tables' must map table name to a column list", "tables")
    for tname, cols in raw_tables.items():
        loc = f"tables[{tname}]"
        if tname.lower() in seen_tables:
            raise SchemaError(f"duplicate table {tname!r}", loc)
        seen_tables.add(tname.lower())
        if not isinstance(cols, list):
            raise SchemaError("column list must be an array", loc)
        parsed_cols: list[tuple[str, str]] = []
        seen_cols: set[str] = set()
        for i, col in enumerate(cols):
            cloc = f"{loc}.columns[{i}]"
            if isinstance(col, str):
                cname, ctype = col, "text"
            elif isinstance(col, list) and len(col) == 2:
                cname, ctype = col
            elif isinstance(col, dict) and "name" in col:
                cname, ctype = col["name"], col.get("type", "text")
            else:
                raise SchemaError(f"bad column entry {col!r}", cloc)
            if cname.lower() in seen_cols:
                raise SchemaError(f"duplicate column {cname!r} in table {tname!r}", cloc)
            seen_cols.add(cname.lower())
            parsed_cols.append((cname, str(ctype)))
        tables.append(Table(tname, tuple(parsed_cols)))

    catalog = SchemaCatalog(sid, tuple(tables))

    fks: list[ForeignKey] = []
    for i, pair in enumerate(doc.get("foreign_keys", [])):
        loc = f"foreign_keys[{i}]"
        if not (isinstance(pair, list) and len(pair) == 2):
            raise SchemaError(f"foreign key must be a [from, to] pair, got {pair!r}", loc)
        ft, fc = _split_dotted(pair[0], loc)
        tt, tc = _split_dotted(pair[1], loc)
        for table, column in ((ft, fc), (tt, tc)):
            t = catalog.table(table)
            if t is None:
                raise SchemaError(f"foreign key references missing table {table!r}", loc)
            if not t.has_column(column):
                raise SchemaError(f"foreign key references missing column {table}.{column}", loc)
        fks.append(
            ForeignKey(
                catalog.canonical_table(ft),
                catalog.canonical_column(ft, fc),
                catalog.canonical_table(tt),
                catalog.canonical_column(tt, tc),
            )
        )

    readable: dict[str, str] = {}
    for key, phrase in (doc.get("readable_names") or {}).items():
        loc = f"readable_names[{key}]"
        if not isinstance(phrase, str):
            raise SchemaError(f"readable name must be a string, got {phrase!r}", loc)
        if "." in key:
            table, column = _split_dotted(key, loc)
            t = catalog.table(table)
            if t is None or not t.has_column(column):
                raise SchemaError(f"readable name for unknown entity {key!r}", loc)
            readable[f"{catalog.canonical_table(table)}.{catalog.canonical_column(table, column)}"] = phrase
        else:
            if catalog.table(key) is None:
                raise SchemaError(f"readable name for unknown table {key!r}", loc)
            readable[catalog.canonical_table(key)] = phrase

    return SchemaCatalog(sid, tuple(tables), tuple(fks), readable)
