"""Lazy in-memory dataset engine.

A Dataset is a linear plan over a source (a text file in the block store or
an in-memory list).  Nothing runs until an action (`collect`/`count`) is
invoked; narrow transformations then execute per partition, with key-based
stages merged single-threaded so results never depend on the partition count
or the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

from .errors import DataflowError

KV = tuple[Any, Any]


def normalize_line(line: str) -> str:
    """Squash commas and periods to spaces, drop hyphens, lowercase.

    Deliberately nothing more: hyphens vanish without leaving a space
    ("state-of-the-art" becomes "stateoftheart") and all other punctuation
    survives ("cat!" stays distinct from "cat").
    """
    return line.replace(",", " ").replace(".", " ").replace("-", "").lower()


def tokenize(line: str) -> list[str]:
    """normalize_line, then split on runs of whitespace."""
    return normalize_line(line).split()


def normalize_line_extended(line: str) -> str:
    """Practical variant: every non-alphanumeric character becomes a space."""
    return "".join(c if c.isalnum() else " " for c in line.lower())


def tokenize_extended(line: str) -> list[str]:
    return normalize_line_extended(line).split()


@dataclass(frozen=True)
class TransformNode:
    kind: str  # map | flat_map | filter | reduce_by_key | sort_by_key
    fn: Callable | None = None
    ascending: bool = True


class Dataflow:
    """Factory for datasets; holds the block store handle and worker count."""

    def __init__(self, dfs=None, workers: int = 1):
        self.dfs = dfs
        self.workers = max(1, workers)

    def from_text_file(self, path: str, partitions: int = 1) -> "Dataset":
        """Lazy source over a stored text file; read only when acted upon."""
        if self.dfs is None:
            raise DataflowError("no block store attached to this context")
        return Dataset(self, ("text", path), partitions)

    def from_rows(self, rows, partitions: int = 1) -> "Dataset":
        return Dataset(self, ("rows", list(rows)), partitions)


class Dataset:
    """An immutable plan: source + chain of transformations."""

    def __init__(self, ctx: Dataflow, source, partitions: int,
                 ops: tuple[TransformNode, ...] = ()):
        if partitions < 1:
            raise DataflowError("partition count must be >= 1")
        self._ctx = ctx
        self._source = source
        self._partitions = partitions
        self._ops = ops

    def _extend(self, node: TransformNode) -> "Dataset":
        return Dataset(self._ctx, self._source, self._partitions, self._ops + (node,))

    # -- transformations (lazy) -------------------------------------------

    def map(self, fn) -> "Dataset":
        return self._extend(TransformNode("map", fn))

    def flat_map(self, fn) -> "Dataset":
        return self._extend(TransformNode("flat_map", fn))

    def filter(self, fn) -> "Dataset":
        return self._extend(TransformNode("filter", fn))

    def reduce_by_key(self, fn) -> "Dataset":
        """Fold values per distinct key with `fn` (must be associative and
        commutative); runs per partition first, then merges, so memory stays
        bounded by the distinct-key count.  Output is ordered by key."""
        return self._extend(TransformNode("reduce_by_key", fn))

    def sort_by_key(self, ascending: bool = True) -> "Dataset":
        """Global sort of key/value pairs by key; ties always break by
        ascending value so the output is a deterministic total order."""
        return self._extend(TransformNode("sort_by_key", ascending=ascending))

    # -- actions -----------------------------------------------------------

    def collect(self) -> list:
        parts = self._load_partitions()
        ops = list(self._ops)
        while ops:
            narrow = []
            while ops and ops[0].kind in ("map", "flat_map", "filter"):
                narrow.append(ops.pop(0))
            if narrow:
                parts = self._run_narrow(parts, narrow)
            if ops:
                wide = ops.pop(0)
                if wide.kind == "reduce_by_key":
                    parts = [self._run_reduce_by_key(parts, wide.fn)]
                else:
                    parts = [self._run_sort(parts, wide.ascending)]
        return [row for part in parts for row in part]

    def count(self) -> int:
        return len(self.collect())

    # -- execution ----------------------------------------------------------

    def _load_partitions(self) -> list[list]:
        kind, payload = self._source
        if kind == "text":
            rows = list(self._ctx.dfs.iter_lines(payload))
        else:
            rows = payload
        n, p = len(rows), self._partitions
        base, extra = divmod(n, p)
        parts, start = [], 0
        for i in range(p):
            size = base + (1 if i < extra else 0)
            parts.append(rows[start:start + size])
            start += size
        return parts

    def _run_narrow(self, parts, nodes) -> list[list]:
        def one(index_part):
            index, part = index_part
            out = part
            for node in nodes:
                try:
                    if node.kind == "map":
                        out = [node.fn(row) for row in out]
                    elif node.kind == "flat_map":
                        out = [item for row in out for item in node.fn(row)]
                    else:
                        out = [row for row in out if node.fn(row)]
                except DataflowError:
                    raise
                except Exception as exc:
                    raise DataflowError(
                        f"{node.kind} function failed in partition {index}: {exc}",
                        partition_index=index) from exc
            return out

        work = list(enumerate(parts))
        if self._ctx.workers == 1 or len(work) == 1:
            return [one(w) for w in work]
        with ThreadPoolExecutor(max_workers=self._ctx.workers) as pool:
            return list(pool.map(one, work))

    def _run_reduce_by_key(self, parts, fn) -> list[KV]:
        def fold(index_part):
            index, part = index_part
            acc: dict = {}
            for row in part:
                if not isinstance(row, tuple) or len(row) != 2:
                    raise DataflowError(
                        f"reduce_by_key needs (key, value) pairs, got {row!r} "
                        f"in partition {index}", partition_index=index)
                key, value = row
                acc[key] = fn(acc[key], value) if key in acc else value
            return acc

        work = list(enumerate(parts))
        if self._ctx.workers == 1 or len(work) == 1:
            folded = [fold(w) for w in work]
        else:
            with ThreadPoolExecutor(max_workers=self._ctx.workers) as pool:
                folded = list(pool.map(fold, work))
        merged: dict = {}
        for acc in folded:
            for key, value in acc.items():
                merged[key] = fn(merged[key], value) if key in merged else value
        try:
            return sorted(merged.items())
        except TypeError as exc:
            raise DataflowError(f"keys are not mutually orderable: {exc}") from exc

    def _run_sort(self, parts, ascending: bool) -> list[KV]:
        rows = [row for part in parts for row in part]
        for row in rows:
            if not isinstance(row, tuple) or len(row) != 2:
                raise DataflowError(
                    f"sort_by_key needs (key, value) pairs, got {row!r}")
        try:
            rows.sort(key=lambda kv: kv[1])          # tie-break: value ascending
            rows.sort(key=lambda kv: kv[0], reverse=not ascending)
        except TypeError as exc:
            raise DataflowError(f"keys are not mutually orderable: {exc}") from exc
        return rows


def term_counts(ds: Dataset, stopwords, normalizer=normalize_line) -> Dataset:
    """The word-count chain: normalize, split, drop stopwords, count, then
    order by count descending.  Stopwords are matched after lowercasing."""
    stopwords = set(stopwords)
    return (ds.map(normalizer)
            .flat_map(str.split)
            .filter(lambda tok: tok not in stopwords)
            .map(lambda tok: (tok, 1))
            .reduce_by_key(lambda a, b: a + b)
            .map(lambda kv: (kv[1], kv[0]))
            .sort_by_key(ascending=False))
