"""SQL table store with external and internal (managed) tables.

External tables are schema-on-read views over JSON Lines or CSV files in the
block store: queries stream from the source and never copy or modify it.
Internal tables materialize a source table into managed per-column segments
(plain int64 arrays, dictionary-encoded text) owned by the catalog and
deleted on drop.  The query language is a deliberately small subset: SELECT
of column refs / SUM aggregates / sums joined with `+` / aliases, one FROM
table, GROUP BY, ORDER BY with ASC|DESC, LIMIT.
"""

from __future__ import annotations

import csv
import io
import json
import re
import shutil
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SqlError, SqlParseError

INT64 = "int64"
TEXT = "text"
RECORD = "record"


# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    name: str
    type: str
    children: tuple = ()

    def to_dict(self):
        d = {"name": self.name, "type": self.type}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["type"],
                   tuple(cls.from_dict(c) for c in d.get("children", [])))


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            raise SqlError(f"duplicate column names in schema {self.name}")

    def leaf_paths(self) -> list[str]:
        out = []

        def walk(prefix, cols):
            for col in cols:
                path = f"{prefix}{col.name}"
                if col.type == RECORD:
                    walk(path + ".", col.children)
                else:
                    out.append(path)

        walk("", self.columns)
        return out

    def leaf_type(self, path: str) -> str | None:
        cols = self.columns
        parts = path.split(".")
        for i, part in enumerate(parts):
            match = next((c for c in cols if c.name == part), None)
            if match is None:
                return None
            if match.type == RECORD:
                cols = match.children
            elif i == len(parts) - 1:
                return match.type
            else:
                return None
        return None  # path names a record, not a leaf

    def renamed(self, name: str) -> "TableSchema":
        return TableSchema(name, self.columns)

    def to_dict(self):
        return {"name": self.name, "columns": [c.to_dict() for c in self.columns]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(Column.from_dict(c) for c in d["columns"]))


def tweet_table_schema(name: str = "tweets") -> TableSchema:
    metrics = tuple(Column(n, INT64) for n in (
        "impression_count", "like_count", "quote_count", "reply_count",
        "retweet_count"))
    return TableSchema(name, (
        Column("id", TEXT), Column("author_id", TEXT), Column("text", TEXT),
        Column("created_at", TEXT), Column("public_metrics", RECORD, metrics)))


def user_table_schema(name: str = "users") -> TableSchema:
    return TableSchema(name, (Column("id", TEXT), Column("username", TEXT)))


# ---------------------------------------------------------------------------
# SQL parsing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColRef:
    path: str  # dotted

    def render(self):
        return self.path


@dataclass(frozen=True)
class Aggregate:
    arg: object  # expression

    def render(self):
        return f"SUM({self.arg.render()})"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: object
    right: object

    def render(self):
        return f"{self.left.render()} {self.op} {self.right.render()}"


@dataclass(frozen=True)
class Literal:
    value: int

    def render(self):
        return str(self.value)


@dataclass(frozen=True)
class SelectItem:
    expr: object
    alias: str | None

    @property
    def output_name(self) -> str:
        return self.alias if self.alias is not None else self.expr.render()


@dataclass
class QueryAst:
    select: list
    table: str
    group_by: list = field(default_factory=list)
    order_by: tuple | None = None  # (expr, ascending)
    limit: int | None = None


_KEYWORDS = {"select", "from", "group", "by", "order", "asc", "desc",
             "limit", "as", "sum"}
_UNSUPPORTED = {"join", "where", "having", "union", "distinct", "inner",
                "left", "right", "outer", "on", "count", "avg", "min", "max",
                "insert", "update", "delete", "with"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<symbol>[(),+.*])
""", re.VERBOSE)


def _lex(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SqlParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.i = 0

    # token helpers

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message):
        raise SqlParseError(message, self.peek()[2])

    def keyword(self) -> str | None:
        kind, value, _ = self.peek()
        return value.lower() if kind == "ident" else None

    def accept_keyword(self, word) -> bool:
        if self.keyword() == word:
            self.next()
            return True
        return False

    def expect_keyword(self, word):
        if not self.accept_keyword(word):
            self.error(f"expected {word.upper()}, found {self.peek()[1]!r}")

    def accept_symbol(self, sym) -> bool:
        kind, value, _ = self.peek()
        if kind == "symbol" and value == sym:
            self.next()
            return True
        return False

    def expect_symbol(self, sym):
        if not self.accept_symbol(sym):
            self.error(f"expected {sym!r}, found {self.peek()[1]!r}")

    def reject_unsupported(self):
        word = self.keyword()
        if word in _UNSUPPORTED:
            raise SqlParseError(f"unsupported construct: {word.upper()}",
                                self.peek()[2])

    # grammar

    def parse(self) -> QueryAst:
        self.expect_keyword("select")
        select = [self.select_item()]
        while self.accept_symbol(","):
            select.append(self.select_item())
        self.expect_keyword("from")
        self.reject_unsupported()
        table = self.identifier("table name")
        ast = QueryAst(select=select, table=table)
        self.reject_unsupported()
        if self.accept_keyword("group"):
            self.expect_keyword("by")
            ast.group_by.append(ColRef(self.column_path()))
            while self.accept_symbol(","):
                ast.group_by.append(ColRef(self.column_path()))
        self.reject_unsupported()
        if self.accept_keyword("order"):
            self.expect_keyword("by")
            expr = self.expression()
            ascending = True
            if self.accept_keyword("desc"):
                ascending = False
            else:
                self.accept_keyword("asc")
            ast.order_by = (expr, ascending)
        if self.accept_keyword("limit"):
            kind, value, _ = self.peek()
            if kind != "number":
                self.error("expected a number after LIMIT")
            self.next()
            ast.limit = int(value)
        self.reject_unsupported()
        if self.peek()[0] != "eof":
            self.error(f"unexpected trailing input: {self.peek()[1]!r}")
        self.check_aggregation(ast)
        return ast

    def select_item(self) -> SelectItem:
        self.reject_unsupported()
        expr = self.expression()
        alias = None
        if self.accept_keyword("as"):
            alias = self.identifier("alias")
        return SelectItem(expr, alias)

    def expression(self):
        node = self.term()
        while self.accept_symbol("+"):
            node = BinaryOp("+", node, self.term())
        return node

    def term(self):
        self.reject_unsupported()
        kind, value, _ = self.peek()
        if kind == "number":
            self.next()
            return Literal(int(value))
        if kind == "ident":
            if value.lower() == "sum":
                self.next()
                self.expect_symbol("(")
                arg = self.expression()
                self.expect_symbol(")")
                return Aggregate(arg)
            if value.lower() in _KEYWORDS:
                self.error(f"expected an expression, found {value!r}")
            return ColRef(self.column_path())
        self.error(f"expected an expression, found {self.peek()[1]!r}")

    def column_path(self) -> str:
        parts = [self.identifier("column name")]
        while self.accept_symbol("."):
            parts.append(self.identifier("column name"))
        return ".".join(parts)

    def identifier(self, what) -> str:
        kind, value, _ = self.peek()
        if kind != "ident" or value.lower() in _KEYWORDS:
            self.error(f"expected {what}, found {self.peek()[1]!r}")
        self.next()
        return value

    def check_aggregation(self, ast: QueryAst):
        if not ast.group_by and not any(_has_aggregate(item.expr)
                                        for item in ast.select):
            return
        grouped = {ref.path for ref in ast.group_by}
        for item in ast.select:
            for path in _bare_colrefs(item.expr):
                if path not in grouped:
                    raise SqlParseError(
                        f"column {path} must appear in GROUP BY", 0)


def _has_aggregate(expr) -> bool:
    if isinstance(expr, Aggregate):
        return True
    if isinstance(expr, BinaryOp):
        return _has_aggregate(expr.left) or _has_aggregate(expr.right)
    return False


def _bare_colrefs(expr):
    """Column refs outside any aggregate."""
    if isinstance(expr, ColRef):
        yield expr.path
    elif isinstance(expr, BinaryOp):
        yield from _bare_colrefs(expr.left)
        yield from _bare_colrefs(expr.right)


def _all_colrefs(expr):
    if isinstance(expr, ColRef):
        yield expr.path
    elif isinstance(expr, Aggregate):
        yield from _all_colrefs(expr.arg)
    elif isinstance(expr, BinaryOp):
        yield from _all_colrefs(expr.left)
        yield from _all_colrefs(expr.right)


def parse_sql(text: str) -> QueryAst:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

EXTERNAL = "external"
INTERNAL = "internal"
FORMATS = ("jsonl", "csv")


@dataclass
class Table:
    schema: TableSchema
    kind: str
    source: str | None = None     # dfs path (external)
    format: str | None = None     # jsonl | csv (external)
    segment_dir: Path | None = None  # managed storage (internal)
    row_count: int | None = None  # external: filled on first scan

    @property
    def name(self):
        return self.schema.name


def _coerce_int64(value):
    if value is None:
        return None
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return int(value) if value.is_integer() else None
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            return None
    return None


def _coerce_text(value):
    if value is None:
        return None
    return value if isinstance(value, str) else json.dumps(value)


def _json_lookup(obj, path_parts):
    for part in path_parts:
        if not isinstance(obj, dict) or part not in obj:
            return None
        obj = obj[part]
    return obj


class TableCatalog:
    """Named tables plus their storage.  Mutations are serialized; queries
    hold a per-table read guard so a drop cannot race an active scan."""

    def __init__(self, dfs, store_dir):
        self.dfs = dfs
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self._tables: dict[str, Table] = {}
        self._columns_cache: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._readers: dict[str, int] = {}
        self._readers_zero = threading.Condition(self._lock)
        self._load_catalog()

    # -- persistence -------------------------------------------------------

    @property
    def _catalog_path(self) -> Path:
        return self.store_dir / "catalog.json"

    def _save_catalog(self):
        payload = {}
        for name, t in self._tables.items():
            entry = {"kind": t.kind, "schema": t.schema.to_dict()}
            if t.kind == EXTERNAL:
                entry["source"] = t.source
                entry["format"] = t.format
            else:
                entry["row_count"] = t.row_count
            payload[name] = entry
        self._catalog_path.write_text(json.dumps(payload, indent=1),
                                      encoding="utf-8")

    def _load_catalog(self):
        if not self._catalog_path.exists():
            return
        payload = json.loads(self._catalog_path.read_text(encoding="utf-8"))
        for name, entry in payload.items():
            schema = TableSchema.from_dict(entry["schema"])
            if entry["kind"] == EXTERNAL:
                self._tables[name] = Table(schema, EXTERNAL,
                                           source=entry["source"],
                                           format=entry["format"])
            else:
                self._tables[name] = Table(schema, INTERNAL,
                                           segment_dir=self.store_dir / name,
                                           row_count=entry["row_count"])

    # -- DDL ---------------------------------------------------------------

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def table(self, name: str) -> Table:
        try:
            return self._tables[name]
        except KeyError:
            raise SqlError(f"unknown table: {name}") from None

    def table_names(self) -> list[str]:
        return sorted(self._tables)

    def create_external_table(self, schema: TableSchema, source: str,
                              format: str = "jsonl") -> Table:
        if format not in FORMATS:
            raise SqlError(f"unknown format: {format}")
        if not self.dfs.exists(source):
            raise SqlError(f"unknown path: {source}")
        with self._lock:
            if schema.name in self._tables:
                raise SqlError(f"duplicate table name: {schema.name}")
            table = Table(schema, EXTERNAL, source=source, format=format)
            self._tables[schema.name] = table
            self._save_catalog()
            return table

    def create_internal_table_as(self, schema: TableSchema,
                                 source_table: str) -> Table:
        source = self.table(source_table)
        with self._lock:
            if schema.name in self._tables:
                raise SqlError(f"duplicate table name: {schema.name}")
        paths = schema.leaf_paths()
        columns = {p: [] for p in paths}
        count = 0
        for row in self._scan(source, paths):
            count += 1
            for p in paths:
                columns[p].append(row[p])
        seg_dir = self.store_dir / schema.name
        seg_dir.mkdir(parents=True, exist_ok=True)
        for p in paths:
            self._write_segment(seg_dir, p, schema.leaf_type(p), columns[p])
        with self._lock:
            table = Table(schema, INTERNAL, segment_dir=seg_dir, row_count=count)
            self._tables[schema.name] = table
            self._columns_cache[schema.name] = {
                p: columns[p] for p in paths}
            self._save_catalog()
            return table

    def drop(self, name: str):
        """Forget the table; internal tables also lose their segments.
        Blocks until in-flight queries over the table have finished."""
        with self._readers_zero:
            table = self.table(name)
            while self._readers.get(name, 0) > 0:
                self._readers_zero.wait()
            del self._tables[name]
            self._columns_cache.pop(name, None)
            self._save_catalog()
        if table.kind == INTERNAL and table.segment_dir is not None:
            shutil.rmtree(table.segment_dir, ignore_errors=True)

    def drop_if_exists(self, name: str):
        if self.has_table(name):
            self.drop(name)

    # -- segments ------------------------------------------------------------

    def _write_segment(self, seg_dir: Path, path: str, leaf_type: str, values):
        if leaf_type == INT64:
            payload = {"type": INT64, "values": values}
        else:
            mapping: dict[str, int] = {}
            codes = []
            for v in values:
                if v is None:
                    codes.append(-1)
                else:
                    codes.append(mapping.setdefault(v, len(mapping)))
            payload = {"type": TEXT, "dict": list(mapping), "codes": codes}
        (seg_dir / f"{path}.col.json").write_text(json.dumps(payload),
                                                  encoding="utf-8")

    def _load_column(self, table: Table, path: str) -> list:
        cache = self._columns_cache.setdefault(table.name, {})
        if path not in cache:
            seg = table.segment_dir / f"{path}.col.json"
            if not seg.exists():
                raise SqlError(f"unknown column: {path}")
            payload = json.loads(seg.read_text(encoding="utf-8"))
            if payload["type"] == INT64:
                cache[path] = payload["values"]
            else:
                words = payload["dict"]
                cache[path] = [None if c < 0 else words[c]
                               for c in payload["codes"]]
        return cache[path]

    # -- scanning ------------------------------------------------------------

    def _scan(self, table: Table, paths: list[str]):
        """Yield {path: value} dicts for the requested leaf paths."""
        for p in paths:
            if table.schema.leaf_type(p) is None:
                raise SqlError(f"unknown column: {p}")
        if table.kind == INTERNAL:
            if not paths:
                for _ in range(table.row_count or 0):
                    yield {}
                return
            arrays = [self._load_column(table, p) for p in paths]
            for values in zip(*arrays):
                yield dict(zip(paths, values))
            return
        count = 0
        for row in self._scan_external(table, paths):
            count += 1
            yield row
        table.row_count = count

    def _scan_external(self, table: Table, paths: list[str]):
        coercers = {p: (_coerce_int64 if table.schema.leaf_type(p) == INT64
                        else _coerce_text) for p in paths}
        split_paths = {p: p.split(".") for p in paths}
        if table.format == "jsonl":
            for lineno, line in enumerate(self.dfs.iter_lines(table.source), 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SqlError(
                        f"bad JSON on line {lineno} of {table.source}: {exc}"
                    ) from exc
                yield {p: coercers[p](_json_lookup(obj, split_paths[p]))
                       for p in paths}
        else:
            text = self.dfs.get_file(table.source).decode("utf-8")
            reader = csv.DictReader(io.StringIO(text))
            for record in reader:
                yield {p: coercers[p](record.get(p) or None) for p in paths}

    def scan_count(self, name: str) -> int:
        """Row count; for external tables this performs (and caches) a scan."""
        table = self.table(name)
        if table.row_count is None:
            n = 0
            for _ in self._scan(table, table.schema.leaf_paths()[:1]):
                n += 1
            table.row_count = n
        return table.row_count

    # -- queries -------------------------------------------------------------

    def execute(self, query, aliases: dict[str, str] | None = None,
                row_predicate=None) -> "ResultSet":
        """Run a query (text or parsed).  `aliases` maps query table names to
        catalog table names; `row_predicate` is an optional (paths, fn) pair
        applied to each source row before aggregation."""
        ast = parse_sql(query) if isinstance(query, str) else query
        name = (aliases or {}).get(ast.table, ast.table)
        with self._readers_zero:
            table = self.table(name)  # resolve under the lock
            self._readers[name] = self._readers.get(name, 0) + 1
        try:
            return _execute(self, table, ast, row_predicate)
        finally:
            with self._readers_zero:
                self._readers[name] -= 1
                self._readers_zero.notify_all()


@dataclass
class ResultSet:
    columns: list[str]
    rows: list[tuple]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(["" if v is None else v for v in row])
        return buf.getvalue()


class _SumAcc:
    __slots__ = ("total", "seen")

    def __init__(self):
        self.total = 0
        self.seen = False

    def add(self, value):
        if value is None:
            return  # SUM ignores nulls
        if not isinstance(value, int) or isinstance(value, bool):
            raise SqlError(f"type mismatch: SUM over non-integer {value!r}")
        self.total += value
        self.seen = True

    @property
    def value(self):
        return self.total if self.seen else None  # empty/all-null group


def _eval_scalar(expr, row):
    if isinstance(expr, ColRef):
        return row[expr.path]
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, BinaryOp):
        left = _eval_scalar(expr.left, row)
        right = _eval_scalar(expr.right, row)
        return _add(left, right)
    raise SqlError("aggregate used where a plain value is required")


def _add(left, right):
    if left is None or right is None:
        return None
    if not isinstance(left, int) or not isinstance(right, int) \
            or isinstance(left, bool) or isinstance(right, bool):
        raise SqlError(f"type mismatch in +: {left!r} + {right!r}")
    return left + right


def _eval_with_aggregates(expr, group_row, agg_values):
    if isinstance(expr, Aggregate):
        return agg_values[expr]
    if isinstance(expr, ColRef):
        return group_row[expr.path]
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, BinaryOp):
        return _add(_eval_with_aggregates(expr.left, group_row, agg_values),
                    _eval_with_aggregates(expr.right, group_row, agg_values))
    raise SqlError(f"cannot evaluate expression node {expr!r}")


def _collect_aggregates(expr, out):
    if isinstance(expr, Aggregate):
        out.setdefault(expr, None)
    elif isinstance(expr, BinaryOp):
        _collect_aggregates(expr.left, out)
        _collect_aggregates(expr.right, out)


def _execute(catalog: TableCatalog, table: Table, ast: QueryAst,
             row_predicate) -> ResultSet:
    exprs = [item.expr for item in ast.select]
    if ast.order_by is not None:
        exprs.append(_resolve_order_expr(ast))
    aggregated = any(_has_aggregate(e) for e in exprs) or ast.group_by

    paths = set()
    for e in exprs:
        paths.update(_all_colrefs(e))
    for ref in ast.group_by:
        paths.add(ref.path)
    pred_paths, pred_fn = (row_predicate or ((), None))
    scan_paths = sorted(paths | set(pred_paths))

    rows = catalog._scan(table, scan_paths)
    if pred_fn is not None:
        rows = (r for r in rows if pred_fn(r))

    columns = [item.output_name for item in ast.select]
    if aggregated:
        out = _execute_aggregate(ast, rows)
    else:
        out = _execute_plain(ast, rows)
    if ast.order_by is not None:
        out = _apply_order(ast, out)
    else:
        out = [row for row, _sort_key in out]
    if ast.limit is not None:
        out = out[:ast.limit]
    return ResultSet(columns=columns, rows=out)


def _resolve_order_expr(ast: QueryAst):
    expr, _asc = ast.order_by
    if isinstance(expr, ColRef):
        for item in ast.select:
            if item.alias == expr.path:
                return item.expr
    return expr


def _null_safe(value):
    # orderable stand-in: nulls sort after every non-null value
    return (value is None, value)


def _execute_plain(ast: QueryAst, rows):
    order_expr = _resolve_order_expr(ast) if ast.order_by else None
    out = []
    for index, row in enumerate(rows):
        values = tuple(_eval_scalar(item.expr, row) for item in ast.select)
        # tie-break: input order (index) keeps sorting deterministic
        sort_key = None
        if order_expr is not None:
            sort_key = (_null_safe(_eval_scalar(order_expr, row)), (index,))
        out.append((values, sort_key))
    return out


def _execute_aggregate(ast: QueryAst, rows):
    agg_exprs: dict = {}
    for item in ast.select:
        _collect_aggregates(item.expr, agg_exprs)
    order_expr = _resolve_order_expr(ast) if ast.order_by else None
    if order_expr is not None:
        _collect_aggregates(order_expr, agg_exprs)
    agg_list = list(agg_exprs)

    group_paths = [ref.path for ref in ast.group_by]
    if order_expr is not None:
        for path in _bare_colrefs(order_expr):
            if path not in group_paths:
                raise SqlError(f"column {path} must appear in GROUP BY")
    groups: dict = {}
    for row in rows:
        key = tuple(row[p] for p in group_paths)
        accs = groups.get(key)
        if accs is None:
            accs = groups[key] = [_SumAcc() for _ in agg_list]
        for acc, agg in zip(accs, agg_list):
            acc.add(_eval_scalar(agg.arg, row))

    if not group_paths and not groups:
        groups[()] = [_SumAcc() for _ in agg_list]  # global aggregate, empty input

    out = []
    for key, accs in groups.items():
        group_row = dict(zip(group_paths, key))
        agg_values = {agg: acc.value for agg, acc in zip(agg_list, accs)}
        values = tuple(_eval_with_aggregates(item.expr, group_row, agg_values)
                       for item in ast.select)
        sort_key = None
        if order_expr is not None:
            # tie-break: group key ascending
            sort_key = (_null_safe(_eval_with_aggregates(order_expr, group_row,
                                                         agg_values)),
                        tuple(_null_safe(v) for v in key))
        out.append((values, sort_key, tuple(_null_safe(v) for v in key)))
    if order_expr is None:
        out.sort(key=lambda item: item[2])
    return [(values, sort_key) for values, sort_key, _ in out]


def _apply_order(ast: QueryAst, out):
    _expr, ascending = ast.order_by
    try:
        out.sort(key=lambda pair: pair[1][1])
        out.sort(key=lambda pair: pair[1][0], reverse=not ascending)
    except TypeError as exc:
        raise SqlError(f"ORDER BY values are not comparable: {exc}") from exc
    return [row for row, _key in out]
