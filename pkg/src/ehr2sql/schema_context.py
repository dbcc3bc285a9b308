"""Database schema introspection and prompt-ready rendering.

Tables come back in catalog order, columns in table_info order, and the whole
context renders as a `[Database Tables]` block of canonical CREATE TABLE
statements with one sampled value per column as a trailing comment. Rendering
is deterministic byte-for-byte for a fixed database file.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass
from pathlib import Path

HEADER = "[Database Tables]"

# Rows scanned per table when sampling column values; beyond this, columns
# that are null early in the table simply get no sample.
SAMPLE_SCAN_ROWS = 1000

DEFAULT_SAMPLE_TRUNCATE = 40


class DatabaseUnreadableError(RuntimeError):
    pass


class EmptySchemaError(RuntimeError):
    pass


@dataclass(frozen=True)
class ColumnDef:
    name: str
    declared_type: str
    constraints: str
    # Rendered SQL literal (possibly several, comma-joined); None = no sample.
    sample: str | None


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    # Extra canonical lines after the columns (composite keys, foreign keys).
    constraint_lines: tuple[str, ...]
    raw_sql: str


@dataclass(frozen=True)
class SchemaContext:
    tables: tuple[TableDef, ...]
    rendered: str


def _connect_readonly(db_path: str | Path) -> sqlite3.Connection:
    path = Path(db_path)
    try:
        conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
        conn.execute("SELECT 1 FROM sqlite_master LIMIT 1").fetchall()
    except sqlite3.Error as exc:
        raise DatabaseUnreadableError(f"cannot open {db_path}: {exc}") from exc
    return conn


def render_literal(value: object, truncate: int = DEFAULT_SAMPLE_TRUNCATE) -> str:
    """Render a cell as a SQL literal; long strings are cut at `truncate` chars
    with a trailing ellipsis marker, inside the quotes so the literal stays valid."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, bytes):
        return "X'" + value.hex() + "'"
    text = str(value)
    if len(text) > truncate:
        text = text[:truncate] + "..."
    return "'" + text.replace("'", "''") + "'"


def _unique_single_columns(conn: sqlite3.Connection, table: str) -> set[str]:
    names = set()
    for row in conn.execute(f"PRAGMA index_list({_quote_ident(table)})").fetchall():
        # row: (seq, name, unique, origin, partial); origin 'u' = UNIQUE constraint
        _, index_name, is_unique, origin = row[0], row[1], row[2], row[3]
        if not is_unique or origin != "u":
            continue
        cols = conn.execute(f"PRAGMA index_info({_quote_ident(index_name)})").fetchall()
        if len(cols) == 1:
            names.add(cols[0][2])
    return names


def _quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _column_samples(
    conn: sqlite3.Connection,
    table: str,
    column: str,
    count: int,
    truncate: int,
) -> str | None:
    sql = f"SELECT {_quote_ident(column)} FROM {_quote_ident(table)}"
    try:
        rows = conn.execute(sql + " ORDER BY rowid LIMIT ?", (SAMPLE_SCAN_ROWS,)).fetchall()
    except sqlite3.OperationalError:
        # WITHOUT ROWID tables have no rowid; fall back to natural order.
        rows = conn.execute(sql + " LIMIT ?", (SAMPLE_SCAN_ROWS,)).fetchall()
    seen: list[object] = []
    for (value,) in rows:
        if value is None or value in seen:
            continue
        seen.append(value)
        if len(seen) >= count:
            break
    if not seen:
        return None
    return ", ".join(render_literal(v, truncate) for v in seen)


def _foreign_key_lines(conn: sqlite3.Connection, table: str) -> list[str]:
    # fk rows: (id, seq, ref_table, from_col, to_col, on_update, on_delete, match)
    groups: dict[int, dict] = {}
    for row in conn.execute(f"PRAGMA foreign_key_list({_quote_ident(table)})").fetchall():
        fk_id, _, ref_table, from_col, to_col = row[0], row[1], row[2], row[3], row[4]
        group = groups.setdefault(fk_id, {"table": ref_table, "from": [], "to": []})
        group["from"].append(from_col)
        group["to"].append(to_col if to_col is not None else "")
    lines = []
    for fk_id in sorted(groups):
        g = groups[fk_id]
        target_cols = ", ".join(c for c in g["to"] if c)
        target = g["table"] + (f" ({target_cols})" if target_cols else "")
        lines.append(f"foreign key ({', '.join(g['from'])}) references {target}")
    return lines


def introspect(
    db_path: str | Path,
    with_samples: bool = True,
    samples_per_column: int = 1,
    include_foreign_keys: bool = False,
    sample_truncate: int = DEFAULT_SAMPLE_TRUNCATE,
) -> SchemaContext:
    """Read the catalog of a SQLite database into a renderable SchemaContext."""
    if samples_per_column < 1:
        raise ValueError("samples_per_column must be >= 1")
    conn = _connect_readonly(db_path)
    try:
        table_rows = conn.execute(
            "SELECT name, sql FROM sqlite_master"
            " WHERE type = 'table' AND name NOT LIKE 'sqlite_%'"
        ).fetchall()
        if not table_rows:
            raise EmptySchemaError(f"{db_path} has no user tables")
        tables = []
        for table_name, raw_sql in table_rows:
            info = conn.execute(f"PRAGMA table_info({_quote_ident(table_name)})").fetchall()
            pk_columns = [row[1] for row in info if row[5]]
            unique_cols = _unique_single_columns(conn, table_name)
            columns = []
            for _, col_name, decl_type, notnull, default, pk in info:
                parts = []
                if notnull:
                    parts.append("not null")
                if default is not None:
                    parts.append(f"default {default}")
                if pk and len(pk_columns) == 1:
                    parts.append("primary key")
                if col_name in unique_cols:
                    parts.append("unique")
                sample = None
                if with_samples:
                    sample = _column_samples(
                        conn, table_name, col_name, samples_per_column, sample_truncate
                    )
                columns.append(
                    ColumnDef(
                        name=col_name,
                        declared_type=(decl_type or "").lower(),
                        constraints=" ".join(parts),
                        sample=sample,
                    )
                )
            constraint_lines = []
            if len(pk_columns) > 1:
                constraint_lines.append(f"primary key ({', '.join(pk_columns)})")
            if include_foreign_keys:
                constraint_lines.extend(_foreign_key_lines(conn, table_name))
            tables.append(
                TableDef(
                    name=table_name,
                    columns=tuple(columns),
                    constraint_lines=tuple(constraint_lines),
                    raw_sql=raw_sql or "",
                )
            )
    finally:
        conn.close()
    tables_tuple = tuple(tables)
    return SchemaContext(tables=tables_tuple, rendered=render_tables(tables_tuple))


def render_tables(tables: tuple[TableDef, ...]) -> str:
    blocks = []
    for table in tables:
        lines = []
        total = len(table.columns) + len(table.constraint_lines)
        for i, col in enumerate(table.columns):
            decl = col.name
            if col.declared_type:
                decl += f" {col.declared_type}"
            if col.constraints:
                decl += f" {col.constraints}"
            if i < total - 1:
                decl += ","
            if col.sample is not None:
                decl += f" -- {col.sample}"
            lines.append("  " + decl)
        for j, extra in enumerate(table.constraint_lines):
            tail = "," if len(table.columns) + j < total - 1 else ""
            lines.append("  " + extra + tail)
        blocks.append(f"CREATE TABLE {table.name}\n(\n" + "\n".join(lines) + "\n);")
    return HEADER + "\n" + "\n\n".join(blocks)


def render(ctx: SchemaContext) -> str:
    """Re-render a context; identical to the rendered field by construction."""
    return render_tables(ctx.tables)
