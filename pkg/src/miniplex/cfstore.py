"""Sorted row-key store with column families.

Rows live in memory behind a write buffer and persist as segment files in
the block store: flushing merges the current segment with the buffer into a
single new segment (one-shot compaction, no background work).  Row keys
iterate in ascending UTF-8 byte order.  Writes are last-write-wins per
(row, family, qualifier); there are no cell versions or timestamps.

Concurrency: one writer per table.  Scans snapshot the key range at start
and rows are replaced (not mutated) on write, so an active scan never sees a
concurrent writer's changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CfError

_FAMILY_SEP = ":"


@dataclass(frozen=True)
class Cell:
    row_key: str
    family: str
    qualifier: str
    value: str


@dataclass
class LoadReport:
    loaded: int = 0
    rejected: int = 0


def _byte_key(s: str) -> bytes:
    return s.encode("utf-8")


class CfTable:
    def __init__(self, store: "CfStore", name: str, families: set[str],
                 segment: str | None):
        self.store = store
        self.name = name
        self.families = set(families)
        self._segment = segment      # dfs path of the current merged segment
        self._rows: dict[str, dict] | None = None  # lazy: segment + buffer
        self._dirty = False

    # -- loading -------------------------------------------------------------

    def _ensure_loaded(self):
        if self._rows is not None:
            return
        rows: dict[str, dict] = {}
        if self._segment is not None:
            for line in self.store.dfs.iter_lines(self._segment):
                if not line:
                    continue
                row_key, family, qualifier, value = json.loads(line)
                rows.setdefault(row_key, {})[(family, qualifier)] = value
        self._rows = rows

    def _check_family(self, family: str):
        if family not in self.families:
            raise CfError(f"unknown family {family!r} in table {self.name}")

    # -- mutations -----------------------------------------------------------

    def put(self, row_key: str, family: str, qualifier: str, value: str):
        self._check_family(family)
        if not family or not qualifier:
            raise CfError("family and qualifier must be non-empty")
        self._ensure_loaded()
        # copy-on-write per row keeps snapshots taken by active scans intact
        row = dict(self._rows.get(row_key, ()))
        row[(family, qualifier)] = value
        self._rows[row_key] = row
        self._dirty = True

    def flush(self):
        """Merge buffer and segment into one new sorted segment file."""
        self._ensure_loaded()
        if not self._dirty:
            return
        lines = []
        for row_key in sorted(self._rows, key=_byte_key):
            cells = self._rows[row_key]
            for (family, qualifier) in sorted(cells):
                lines.append(json.dumps(
                    [row_key, family, qualifier, cells[(family, qualifier)]]))
        payload = ("\n".join(lines) + "\n").encode() if lines else b""
        self._segment = self.store._write_segment(self.name, payload)
        self._dirty = False

    # -- reads ---------------------------------------------------------------

    def get(self, row_key: str) -> list[Cell]:
        """All cells of a row, sorted by (family, qualifier); [] if absent."""
        self._ensure_loaded()
        cells = self._rows.get(row_key)
        if not cells:
            return []
        return [Cell(row_key, f, q, cells[(f, q)]) for f, q in sorted(cells)]

    def scan(self, family: str, qualifiers: set[str] | None = None,
             start_row: str | None = None, end_row: str | None = None):
        """Stream (row_key, [cells]) ascending within [start_row, end_row).

        Only cells of `family` are returned, optionally restricted to
        `qualifiers`; rows left with no matching cells are skipped.
        """
        self._check_family(family)
        self._ensure_loaded()
        # shallow copy = true snapshot, because put() replaces row dicts
        # rather than mutating them; cell data itself is never duplicated
        snapshot = dict(self._rows)
        keys = sorted(snapshot, key=_byte_key)
        for row_key in keys:
            if start_row is not None and _byte_key(row_key) < _byte_key(start_row):
                continue
            if end_row is not None and _byte_key(row_key) >= _byte_key(end_row):
                break
            cells = snapshot.get(row_key)
            if cells is None:
                continue
            out = [Cell(row_key, f, q, cells[(f, q)])
                   for f, q in sorted(cells)
                   if f == family and (qualifiers is None or q in qualifiers)]
            if out:
                yield row_key, out

    def row_count(self) -> int:
        self._ensure_loaded()
        return len(self._rows)


class CfStore:
    """Catalog of column-family tables under one metadata directory."""

    def __init__(self, dfs, meta_dir):
        self.dfs = dfs
        self.meta_dir = Path(meta_dir)
        self.meta_dir.mkdir(parents=True, exist_ok=True)
        self._tables: dict[str, CfTable] = {}
        self._meta: dict = {"tables": {}, "next_segment": 0}
        self._load_meta()

    # -- metadata ------------------------------------------------------------

    @property
    def _meta_path(self) -> Path:
        return self.meta_dir / "cf_catalog.json"

    def _load_meta(self):
        if self._meta_path.exists():
            self._meta = json.loads(self._meta_path.read_text(encoding="utf-8"))
        for name, entry in self._meta["tables"].items():
            self._tables[name] = CfTable(self, name, set(entry["families"]),
                                         entry["segment"])

    def _save_meta(self):
        self._meta_path.write_text(json.dumps(self._meta, indent=1),
                                   encoding="utf-8")

    def _write_segment(self, table_name: str, payload: bytes) -> str:
        seq = self._meta["next_segment"]
        self._meta["next_segment"] = seq + 1
        path = f"/.cfstore/{table_name}/seg{seq:06d}"
        self.dfs.put_file(path, payload)
        self._meta["tables"][table_name]["segment"] = path
        self._save_meta()
        return path

    # -- tables ----------------------------------------------------------------

    def create_table(self, name: str, families: set[str]) -> CfTable:
        if name in self._tables:
            raise CfError(f"duplicate table name: {name}")
        families = set(families)
        if not families:
            raise CfError("a table needs at least one column family")
        table = CfTable(self, name, families, segment=None)
        self._tables[name] = table
        self._meta["tables"][name] = {"families": sorted(families),
                                      "segment": None}
        self._save_meta()
        return table

    def drop_table(self, name: str):
        self.table(name)  # raise on unknown
        del self._tables[name]
        del self._meta["tables"][name]
        # segment files in the block store become unreferenced; the store has
        # no delete, which is fine at desk scale
        self._save_meta()

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def table(self, name: str) -> CfTable:
        try:
            return self._tables[name]
        except KeyError:
            raise CfError(f"unknown table: {name}") from None

    def table_names(self) -> list[str]:
        return sorted(self._tables)


TWEET_FAMILY = "m"
TWEET_QUALIFIERS = ("author_id", "impressions", "likes", "quotes",
                    "replies", "retweets")
_METRIC_KEYS = {"impressions": "impression_count", "likes": "like_count",
                "quotes": "quote_count", "replies": "reply_count",
                "retweets": "retweet_count"}


def load_tweets(table: CfTable, tweets) -> LoadReport:
    """Load tweet records: one row per tweet keyed by tweet id, metric cells
    as decimal text under family "m".  Duplicate ids are rejected and counted.
    Flushes once at the end."""
    if TWEET_FAMILY not in table.families:
        raise CfError(f'table {table.name} lacks the "{TWEET_FAMILY}" family')
    report = LoadReport()
    table._ensure_loaded()
    for tweet in tweets:
        row_key = tweet["id"]
        if row_key in table._rows:
            report.rejected += 1
            continue
        metrics = tweet.get("public_metrics") or {}
        table.put(row_key, TWEET_FAMILY, "author_id", tweet["author_id"])
        for qualifier, source_key in _METRIC_KEYS.items():
            table.put(row_key, TWEET_FAMILY, qualifier,
                      str(int(metrics.get(source_key, 0) or 0)))
        report.loaded += 1
    table.flush()
    return report
