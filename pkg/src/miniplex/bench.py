"""Benchmark harness: seeded dataset generation, repeated timed runs, reports.

A bench run executes a matrix of (task, engine) cells strictly sequentially.
Before any timing, the engines of each task are run once and their outputs
compared; a disagreement aborts the whole bench, because correctness precedes
performance.  That comparison run doubles as the per-cell warm-up.  Each cell
is then timed `repetitions` times (default 10) and the arithmetic mean
reported.

Local wall-clock numbers are not comparable to any published cluster figures;
renderers can attach the 3-node-cluster reference timings for the 500K-tweet
dataset as a labeled column, for orientation only.
"""

from __future__ import annotations

import json
import math
import os
import random
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

from . import tasks
from . import __version__
from .errors import BenchError, BenchMismatchError

# -----------------------------------------------------------------------------
# synthetic data generation
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class GenSpec:
    n_tweets: int
    n_users: int
    seed: int = 0
    vocab_size: int = 1000
    zipf_s: float = 1.2
    follow_density: float = 0.02

    def validate(self):
        if self.n_tweets < 0 or self.n_users < 0:
            raise BenchError("counts must be non-negative")
        if self.n_tweets >= 1 and self.n_users < 1:
            raise BenchError("need at least one user when generating tweets")
        if self.vocab_size < 1:
            raise BenchError("vocab_size must be >= 1")
        if self.zipf_s <= 0:
            raise BenchError("zipf_s must be > 0")
        if not 0.0 <= self.follow_density <= 1.0:
            raise BenchError("follow_density must be in [0, 1]")


def _geometric(rng: random.Random, mean: float) -> int:
    # geometric-like non-negative counter with the given mean
    p = 1.0 / (mean + 1.0)
    return int(math.log(1.0 - rng.random()) / math.log(1.0 - p))


class _ZipfSampler:
    def __init__(self, size: int, s: float):
        self.words = [f"w{i}" for i in range(size)]
        cumulative = []
        total = 0.0
        for rank in range(1, size + 1):
            total += 1.0 / rank ** s
            cumulative.append(total)
        self.cumulative = cumulative
        self.total = total

    def sample(self, rng: random.Random) -> str:
        x = rng.random() * self.total
        return self.words[min(bisect_right(self.cumulative, x),
                              len(self.words) - 1)]


_METRIC_MEANS = {"impression_count": 120.0, "like_count": 8.0,
                 "quote_count": 1.0, "reply_count": 2.0, "retweet_count": 3.0}


def generate(spec: GenSpec, out_dir) -> dict:
    """Write tweets.jsonl, users.jsonl and follows.csv; byte-identical output
    for an identical spec.  Returns the manifest (also saved alongside)."""
    spec.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BenchError(f"unwritable output directory {out_dir}: {exc}") from exc

    rng = random.Random(spec.seed)
    vocab = _ZipfSampler(spec.vocab_size, spec.zipf_s)
    user_ids = [f"u{i}" for i in range(spec.n_users)] if spec.n_tweets else []

    tweet_lines = []
    authors_seen = set()
    for i in range(spec.n_tweets):
        author = user_ids[rng.randrange(spec.n_users)]
        authors_seen.add(author)
        n_tokens = rng.randint(5, 20)
        text = " ".join(vocab.sample(rng) for _ in range(n_tokens))
        metrics = {key: _geometric(rng, mean)
                   for key, mean in _METRIC_MEANS.items()}
        tweet_lines.append(json.dumps({
            "id": f"t{i}", "author_id": author, "text": text,
            "created_at": f"2023-03-01T00:00:00Z+{i}s",
            "public_metrics": metrics}, sort_keys=True))

    follow_lines = ["src,dst"]
    for src in user_ids:
        for dst in user_ids:
            if src != dst and rng.random() < spec.follow_density:
                follow_lines.append(f"{src},{dst}")

    files = {
        "tweets.jsonl": ("\n".join(tweet_lines) + "\n").encode()
        if tweet_lines else b"",
        "users.jsonl": "".join(
            json.dumps({"id": uid, "username": f"user_{uid}"}, sort_keys=True)
            + "\n" for uid in user_ids).encode(),
        "follows.csv": ("\n".join(follow_lines) + "\n").encode(),
    }
    manifest = {"spec": dict(spec.__dict__), "counts": {
        "tweets": spec.n_tweets, "users": len(user_ids),
        "distinct_authors": len(authors_seen),
        "follows": len(follow_lines) - 1}}
    for name, payload in files.items():
        (out_dir / name).write_bytes(payload)
        manifest[name] = {"sha256": sha256(payload).hexdigest(),
                          "bytes": len(payload)}
    (out_dir / "gen_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    return manifest


# -----------------------------------------------------------------------------
# bench runs
# -----------------------------------------------------------------------------

ALL_CELLS = (
    ("influence", "sql-external"),
    ("influence", "sql-internal"),
    ("influence", "cf-scan"),
    ("terms", "mapreduce"),
    ("terms", "dataflow"),
    ("graph", "graph"),
)

DEFAULT_REPETITIONS = 10

# 3-node cluster reference timings (seconds) on the 500K-tweet dataset
REFERENCE_CLUSTER_SECONDS_500K = {
    ("influence", "sql-external"): 11.0,   # warehouse query
    ("influence", "sql-internal"): 11.0,   # warehouse query
    ("influence", "cf-scan"): 16.0,        # column-family store
    ("terms", "mapreduce"): 28.0,
    ("graph", "graph"): 42.0,
}
REFERENCE_CLUSTER_INGEST_5M_SECONDS = 7 * 60.0


@dataclass
class BenchResult:
    task: str
    engine: str
    dataset_label: str
    runs: list[float]
    mean: float
    repetitions: int

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(task=d["task"], engine=d["engine"],
                   dataset_label=d["dataset_label"], runs=list(d["runs"]),
                   mean=d["mean"], repetitions=d["repetitions"])


@dataclass
class BenchReport:
    results: list[BenchResult] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def sorted_results(self):
        return sorted(self.results,
                      key=lambda r: (r.task, r.engine, r.dataset_label))

    def to_dict(self):
        return {"results": [r.to_dict() for r in self.sorted_results()],
                "environment": self.environment}

    @classmethod
    def from_dict(cls, d):
        return cls(results=[BenchResult.from_dict(r) for r in d["results"]],
                   environment=dict(d["environment"]))


def environment_fingerprint() -> dict:
    try:
        memory = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        memory = 0
    return {"cores": os.cpu_count() or 1, "memory_bytes": memory,
            "version": __version__}


def parse_matrix(text: str) -> list[tuple[str, str]]:
    """"all" or comma-separated task:engine cells."""
    if text == "all":
        return list(ALL_CELLS)
    cells = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise BenchError(f"bad matrix cell {part!r}, expected task:engine")
        task, engine = part.split(":", 1)
        if (task, engine) not in ALL_CELLS:
            raise BenchError(f"unknown matrix cell: {task}:{engine}")
        cells.append((task, engine))
    if not cells:
        raise BenchError("empty bench matrix")
    return cells


def _cell_runner(ws, task, engine, options):
    if task == "influence":
        formula = options.get("formula", "prose")
        return lambda: tuple(
            row.as_tuple() for row in tasks.task_influence(ws, engine, formula))
    if task == "terms":
        stopwords = options.get("stopwords")
        if stopwords is None:
            raise BenchError("terms cells need a stopwords file")
        return lambda: tuple(
            (r.term, r.count)
            for r in tasks.task_terms(ws, engine, stopwords))
    if task == "graph":
        follows = options.get("follows")
        if follows is None:
            raise BenchError("graph cells need a follows CSV")

        def run_graph():
            result = tasks.task_graph(ws, follows)
            return (tasks.degrees_csv(result.degrees),
                    tasks.components_csv(result.components),
                    result.edge_list)

        return run_graph
    raise BenchError(f"unknown task: {task}")


def _first_diff(a, b, limit=5):
    diff = []
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            diff.append(f"index {i}: {x!r} != {y!r}")
            if len(diff) >= limit:
                return diff
    if len(a) != len(b):
        diff.append(f"lengths differ: {len(a)} != {len(b)}")
    return diff


def run_bench(ws, matrix, dataset_label: str,
              repetitions: int = DEFAULT_REPETITIONS,
              stopwords=None, follows=None, formula: str = "prose") -> BenchReport:
    """Cross-check each task's engines once (doubling as the warm-up), then
    time every cell `repetitions` times, strictly sequentially."""
    if repetitions < 1:
        raise BenchError("repetitions must be >= 1")
    cells = list(matrix)
    for cell in cells:
        if cell not in ALL_CELLS:
            raise BenchError(f"unknown matrix cell: {cell[0]}:{cell[1]}")
    options = {"stopwords": stopwords, "follows": follows, "formula": formula}
    runners = {cell: _cell_runner(ws, *cell, options) for cell in cells}

    # correctness precedes performance: run once per cell, compare per task
    baseline: dict[str, tuple] = {}
    baseline_engine: dict[str, str] = {}
    for (task, engine) in cells:
        output = runners[(task, engine)]()
        if task not in baseline:
            baseline[task] = output
            baseline_engine[task] = engine
        elif output != baseline[task]:
            raise BenchMismatchError(
                f"task {task}: engine {engine} disagrees with "
                f"{baseline_engine[task]}",
                diff=_first_diff(baseline[task], output))

    report = BenchReport(environment=environment_fingerprint())
    for cell in cells:
        task, engine = cell
        runner = runners[cell]
        runs = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            runner()
            runs.append(time.perf_counter() - t0)
        report.results.append(BenchResult(
            task=task, engine=engine, dataset_label=dataset_label,
            runs=runs, mean=sum(runs) / len(runs), repetitions=repetitions))
    return report


# -----------------------------------------------------------------------------
# rendering
# -----------------------------------------------------------------------------

def render_report(report: BenchReport, format: str = "csv",
                  cluster_refs: bool = False) -> bytes:
    if not report.results:
        raise BenchError("empty bench report")
    if format == "csv":
        return _render_csv(report, cluster_refs)
    if format in ("markdown", "md"):
        return _render_markdown(report, cluster_refs)
    if format in ("svg-bars", "svg"):
        return _render_svg(report)
    raise BenchError(f"unknown report format: {format}")


def _render_csv(report, cluster_refs) -> bytes:
    max_runs = max(len(r.runs) for r in report.sorted_results())
    header = ["task", "engine", "dataset", "mean_ms"]
    if cluster_refs:
        header.append("cluster_ref_500k_s")
    header += [f"run{i + 1}_ms" for i in range(max_runs)]
    lines = [",".join(header)]
    for r in report.sorted_results():
        row = [r.task, r.engine, r.dataset_label, f"{r.mean * 1000:.3f}"]
        if cluster_refs:
            ref = REFERENCE_CLUSTER_SECONDS_500K.get((r.task, r.engine))
            row.append("" if ref is None else f"{ref:.1f}")
        row += [f"{v * 1000:.3f}" for v in r.runs]
        row += [""] * (max_runs - len(r.runs))
        lines.append(",".join(row))
    return ("\n".join(lines) + "\n").encode()


def _render_markdown(report, cluster_refs) -> bytes:
    header = ["task", "engine", "dataset", "mean_ms", "runs"]
    if cluster_refs:
        header.insert(4, "cluster_ref_500k_s")
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for r in report.sorted_results():
        cells = [r.task, r.engine, r.dataset_label, f"{r.mean * 1000:.3f}"]
        if cluster_refs:
            ref = REFERENCE_CLUSTER_SECONDS_500K.get((r.task, r.engine))
            cells.append("-" if ref is None else f"{ref:.1f}")
        cells.append(" ".join(f"{v * 1000:.1f}" for v in r.runs))
        lines.append("| " + " | ".join(cells) + " |")
    env = report.environment
    lines.append("")
    lines.append(f"_environment: {env.get('cores')} cores, "
                 f"{env.get('memory_bytes', 0) // (1 << 20)} MiB RAM, "
                 f"miniplex {env.get('version')}_")
    return ("\n".join(lines) + "\n").encode()


_BAR_COLORS = ("#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c")


def _render_svg(report) -> bytes:
    """One grouped bar chart per dataset label, means in milliseconds."""
    by_dataset: dict[str, list[BenchResult]] = {}
    for r in report.sorted_results():
        by_dataset.setdefault(r.dataset_label, []).append(r)
    bar_w, gap, chart_h, margin = 70, 14, 220, 40
    charts = []
    y_offset = 0
    width = 0
    for dataset, results in sorted(by_dataset.items()):
        peak = max(r.mean for r in results) or 1e-9
        x = margin
        parts = [f'<text x="{margin}" y="{y_offset + 16}" '
                 f'font-size="13" font-family="sans-serif">'
                 f'dataset {dataset} (mean ms)</text>']
        for i, r in enumerate(results):
            h = max(1.0, (r.mean / peak) * (chart_h - 60))
            y = y_offset + 30 + (chart_h - 60) - h
            color = _BAR_COLORS[i % len(_BAR_COLORS)]
            label = f"{r.task}:{r.engine}"
            parts.append(
                f'<rect x="{x}" y="{y:.1f}" width="{bar_w}" height="{h:.1f}" '
                f'fill="{color}"/>'
                f'<text x="{x + bar_w / 2}" y="{y - 4:.1f}" font-size="10" '
                f'text-anchor="middle" font-family="sans-serif">'
                f'{r.mean * 1000:.0f}</text>'
                f'<text x="{x + bar_w / 2}" y="{y_offset + chart_h - 14}" '
                f'font-size="9" text-anchor="middle" '
                f'font-family="sans-serif">{label}</text>')
            x += bar_w + gap
        width = max(width, x + margin)
        charts.append("".join(parts))
        y_offset += chart_h
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{y_offset}">' + "".join(charts) + "</svg>")
    return svg.encode()


# -----------------------------------------------------------------------------
# persistence
# -----------------------------------------------------------------------------

def save_report(report: BenchReport, out_dir, cluster_refs: bool = False) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=1, sort_keys=True),
        encoding="utf-8")
    (out_dir / "bench.csv").write_bytes(render_report(report, "csv", cluster_refs))
    (out_dir / "bench.md").write_bytes(render_report(report, "markdown", cluster_refs))
    (out_dir / "bench.svg").write_bytes(render_report(report, "svg-bars"))
    return out_dir


def load_report(path) -> BenchReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    if not path.exists():
        raise BenchError(f"no saved bench report at {path}")
    return BenchReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
