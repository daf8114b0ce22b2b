"""Embedded MapReduce engine over files in the block store.

A job runs in four phases: split the input lines into contiguous ranges, map
each split independently, shuffle every intermediate pair to the reducer
owning its key (stable 64-bit hash mod reducer count, keys sorted inside each
reducer), then reduce and concatenate the reducer outputs in index order.
Intermediate data lives in memory by default; `spill_mode="disk"` writes
sorted runs to temp files and merge-sorts them at reduce time, which exists
to make shuffle I/O cost observable in benchmarks.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from operator import itemgetter
from pathlib import Path

from .dataflow import tokenize
from .errors import JobError

SPILL_MODES = ("memory", "disk")


def _key_bytes(key) -> bytes:
    if isinstance(key, bytes):
        return key
    return str(key).encode("utf-8")


def default_partitioner(key, num_reducers: int) -> int:
    """Stable across processes and runs (unlike builtin hash)."""
    digest = hashlib.blake2b(_key_bytes(key), digest_size=8).digest()
    return int.from_bytes(digest, "big") % num_reducers


def word_count_mapper(line: str, stopwords) -> list:
    """Emit (token, 1) for each normalized non-stopword token of the line."""
    return [(tok, 1) for tok in tokenize(line) if tok not in stopwords]


def sum_reducer(key, values) -> list:
    return [(key, sum(values))]


@dataclass
class JobSpec:
    input: str | list[str]
    mapper: object  # record -> iterable of (key, value)
    reducer: object  # (key, [values]) -> iterable of (key, value)
    num_map_splits: int = 1
    num_reducers: int = 1
    spill_mode: str = "memory"

    def input_paths(self) -> list[str]:
        return [self.input] if isinstance(self.input, str) else list(self.input)


@dataclass
class JobResult:
    output: list = field(default_factory=list)
    phase_timings: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)


class MapReduce:
    def __init__(self, dfs, workers: int = 1, temp_dir=None):
        self.dfs = dfs
        self.workers = max(1, workers)
        self.temp_dir = temp_dir

    def run_job(self, spec: JobSpec) -> JobResult:
        if spec.num_map_splits < 1 or spec.num_reducers < 1:
            raise JobError("num_map_splits and num_reducers must be >= 1")
        if spec.spill_mode not in SPILL_MODES:
            raise JobError(f"unknown spill_mode: {spec.spill_mode}")

        result = JobResult()
        timings = result.phase_timings
        counters = result.counters

        t0 = time.perf_counter()
        splits = self._split(spec)
        timings["split"] = time.perf_counter() - t0
        counters["split_records"] = sum(len(s) for s in splits)

        if spec.spill_mode == "disk":
            with tempfile.TemporaryDirectory(dir=self.temp_dir) as spill_dir:
                self._map_shuffle_reduce(spec, splits, result, Path(spill_dir))
        else:
            self._map_shuffle_reduce(spec, splits, result, None)
        return result

    # -- phases --------------------------------------------------------------

    def _split(self, spec: JobSpec) -> list[list[str]]:
        records = []
        for path in spec.input_paths():
            records.extend(self.dfs.iter_lines(path))
        n, s = len(records), spec.num_map_splits
        base, extra = divmod(n, s)
        splits, start = [], 0
        for i in range(s):
            size = base + (1 if i < extra else 0)
            splits.append(records[start:start + size])
            start += size
        return splits

    def _map_shuffle_reduce(self, spec, splits, result, spill_dir):
        timings, counters = result.phase_timings, result.counters

        t0 = time.perf_counter()
        map_outputs = self._run_maps(spec, splits)
        timings["map"] = time.perf_counter() - t0
        counters["map_in"] = counters["split_records"]
        counters["map_out"] = sum(len(p) for p in map_outputs)
        counters["shuffle_in"] = counters["map_out"]

        t0 = time.perf_counter()
        if spill_dir is None:
            per_reducer = self._shuffle_memory(spec, map_outputs)
        else:
            per_reducer = self._shuffle_disk(spec, map_outputs, spill_dir)
        timings["shuffle"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        reduced, consumed, groups = self._run_reduces(spec, per_reducer)
        timings["reduce"] = time.perf_counter() - t0
        counters["shuffle_out"] = consumed
        counters["reduce_in"] = consumed
        counters["reduce_groups"] = groups
        counters["reduce_out"] = len(reduced)
        result.output = reduced

    def _run_maps(self, spec, splits) -> list[list]:
        def run_one(indexed):
            index, records = indexed
            out = []
            for record in records:
                try:
                    out.extend(spec.mapper(record))
                except Exception as exc:
                    raise JobError(f"mapper failed in split {index}: {exc}",
                                   split_index=index) from exc
            return out

        work = list(enumerate(splits))
        if self.workers == 1 or len(work) == 1:
            return [run_one(w) for w in work]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(run_one, work))

    def _shuffle_memory(self, spec, map_outputs):
        """Route pairs to reducers, then sort each reducer's pairs by key.

        Pairs are appended in (split, position) order and Python's sort is
        stable, so value order inside a key never depends on worker count.
        """
        per_reducer = [[] for _ in range(spec.num_reducers)]
        for pairs in map_outputs:
            for key, value in pairs:
                per_reducer[default_partitioner(key, spec.num_reducers)].append((key, value))
        for bucket in per_reducer:
            bucket.sort(key=itemgetter(0))
        return per_reducer

    def _shuffle_disk(self, spec, map_outputs, spill_dir: Path):
        """One sorted run file per (split, reducer); reducers merge the runs.

        Run lines are `key<TAB>value` with both halves JSON-encoded so tabs
        and newlines inside data cannot break framing.
        """
        runs = [[] for _ in range(spec.num_reducers)]
        for split_index, pairs in enumerate(map_outputs):
            buckets = [[] for _ in range(spec.num_reducers)]
            for key, value in pairs:
                buckets[default_partitioner(key, spec.num_reducers)].append((key, value))
            for r, bucket in enumerate(buckets):
                if not bucket:
                    continue
                bucket.sort(key=itemgetter(0))
                run_path = spill_dir / f"split{split_index}_r{r}.run"
                with open(run_path, "w", encoding="utf-8") as fh:
                    for key, value in bucket:
                        fh.write(f"{json.dumps(key)}\t{json.dumps(value)}\n")
                runs[r].append(run_path)

        def read_run(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    k, v = line.rstrip("\n").split("\t", 1)
                    yield json.loads(k), json.loads(v)

        # heapq.merge keeps input order on ties, matching the in-memory shuffle
        return [list(heapq.merge(*(read_run(p) for p in paths), key=itemgetter(0)))
                for paths in runs]

    def _run_reduces(self, spec, per_reducer):
        def run_one(indexed):
            index, pairs = indexed
            out = []
            current_key, values = None, []
            have_key = False

            def close_group():
                try:
                    out.extend(spec.reducer(current_key, values))
                except Exception as exc:
                    raise JobError(
                        f"reducer {index} failed on key {current_key!r}: {exc}"
                    ) from exc

            for key, value in pairs:
                if have_key and key == current_key:
                    values.append(value)
                else:
                    if have_key:
                        close_group()
                    current_key, values, have_key = key, [value], True
            if have_key:
                close_group()
            return out, len(pairs)

        work = list(enumerate(per_reducer))
        if self.workers == 1 or len(work) == 1:
            results = [run_one(w) for w in work]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run_one, work))
        output = [pair for out, _ in results for pair in out]
        consumed = sum(n for _, n in results)
        groups = sum(len({k for k, _ in bucket}) for bucket in per_reducer)
        return output, consumed, groups
