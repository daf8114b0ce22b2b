"""The three analytic tasks, each routable to interchangeable backends.

Influence ranks authors by summed engagement metrics and can run over the
external SQL table, the internal columnar table, or a streaming scan of the
column-family store; all three must produce identical rows.  Term counting
runs on either the MapReduce engine or the dataflow engine with identical
output.  The graph task pulls users from the table store, builds the follow
graph and reports degrees plus weak components.

The influence formula comes in two variants: "prose" sums all five metrics;
"verbatim" reproduces a historical query that counts likes twice and skips
quotes.  The two differ per author by exactly likes - quotes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import partial
from pathlib import Path

from . import graph as graphmod
from .cfstore import TWEET_FAMILY
from .dataflow import normalize_line, normalize_line_extended, term_counts
from .errors import TaskError
from .mr_engine import JobSpec, sum_reducer, word_count_mapper
from .tablestore import parse_sql
from .workspace import (CF_TWEETS, TWEETS_EXTERNAL, TWEETS_INTERNAL,
                        USERS_EXTERNAL, USERS_INTERNAL, Workspace)

TASK_INFLUENCE_ENGINES = ("sql-external", "sql-internal", "cf-scan")
TASK_TERMS_ENGINES = ("mapreduce", "dataflow")
FORMULAS = ("prose", "verbatim")

_METRIC_ALIASES = ("impressions", "likes", "quotes", "replies", "retweets")
_METRIC_COLUMNS = {
    "impressions": "public_metrics.impression_count",
    "likes": "public_metrics.like_count",
    "quotes": "public_metrics.quote_count",
    "replies": "public_metrics.reply_count",
    "retweets": "public_metrics.retweet_count",
}
# "verbatim" double-counts likes and omits quotes
FORMULA_TERMS = {
    "prose": ("impressions", "likes", "quotes", "replies", "retweets"),
    "verbatim": ("impressions", "likes", "likes", "replies", "retweets"),
}


@dataclass(frozen=True)
class InfluenceRow:
    author_id: str
    impressions: int
    likes: int
    quotes: int
    replies: int
    retweets: int
    influence: int

    def as_tuple(self):
        return (self.author_id, self.impressions, self.likes, self.quotes,
                self.replies, self.retweets, self.influence)


@dataclass(frozen=True)
class TermRow:
    term: str
    count: int


@dataclass
class GraphTaskResult:
    graph: graphmod.PropertyGraph
    degrees: graphmod.DegreeReport
    components: dict[str, str]
    edge_list: bytes


def influence_query(formula: str = "prose") -> str:
    """Aggregation SQL for the influence ranking, in the chosen variant."""
    if formula not in FORMULAS:
        raise TaskError(f"unknown formula: {formula}")
    select = ["author_id"]
    select += [f"SUM({_METRIC_COLUMNS[name]}) AS {name}"
               for name in _METRIC_ALIASES]
    formula_sum = " + ".join(f"SUM({_METRIC_COLUMNS[name]})"
                             for name in FORMULA_TERMS[formula])
    select.append(f"{formula_sum} AS influence")
    return (f"SELECT {', '.join(select)} FROM tweets "
            "GROUP BY author_id ORDER BY influence DESC")


def apply_formula(formula: str, sums: dict[str, int]) -> int:
    return sum(sums[name] for name in FORMULA_TERMS[formula])


# ---------------------------------------------------------------------------
# task 1: influence
# ---------------------------------------------------------------------------

def task_influence(ws: Workspace, engine: str, formula: str = "prose",
                   scope: str | None = None) -> list[InfluenceRow]:
    """One row per author, influence descending, author_id ascending on ties.

    `scope` keeps only tweets whose text contains the keyword; it needs the
    tweet text, which the column-family table does not store, so it is
    limited to the SQL engines.
    """
    if formula not in FORMULAS:
        raise TaskError(f"unknown formula: {formula}")
    if engine in ("sql-external", "sql-internal"):
        return _influence_sql(ws, engine, formula, scope)
    if engine == "cf-scan":
        if scope is not None:
            raise TaskError("scope filtering is not supported on cf-scan "
                            "(tweet text is not stored in the column family)")
        return _influence_cf_scan(ws, formula)
    raise TaskError(f"unknown influence engine: {engine}")


def _influence_sql(ws, engine, formula, scope):
    table = TWEETS_EXTERNAL if engine == "sql-external" else TWEETS_INTERNAL
    if not ws.catalog.has_table(table):
        raise TaskError(f"backend not loaded: table {table} missing "
                        "(run ingest load first)")
    predicate = None
    if scope is not None:
        predicate = (("text",), lambda row: scope in (row["text"] or ""))
    ast = parse_sql(influence_query(formula))
    result = ws.catalog.execute(ast, aliases={"tweets": table},
                                row_predicate=predicate)
    return [InfluenceRow(*row) for row in result.rows]


def _influence_cf_scan(ws, formula):
    if not ws.cfstore.has_table(CF_TWEETS):
        raise TaskError(f"backend not loaded: cf table {CF_TWEETS} missing "
                        "(run ingest load first)")
    table = ws.cfstore.table(CF_TWEETS)
    sums: dict[str, dict[str, int]] = {}
    for _row_key, cells in table.scan(TWEET_FAMILY):
        values = {c.qualifier: c.value for c in cells}
        author = values["author_id"]
        acc = sums.setdefault(author, dict.fromkeys(_METRIC_ALIASES, 0))
        for name in _METRIC_ALIASES:
            acc[name] += int(values[name])
    rows = [InfluenceRow(author, acc["impressions"], acc["likes"],
                         acc["quotes"], acc["replies"], acc["retweets"],
                         apply_formula(formula, acc))
            for author, acc in sums.items()]
    rows.sort(key=lambda r: r.author_id)
    rows.sort(key=lambda r: r.influence, reverse=True)
    return rows


# ---------------------------------------------------------------------------
# task 2: term frequencies
# ---------------------------------------------------------------------------

def load_stopwords(path) -> set[str]:
    path = Path(path)
    if not path.exists():
        raise TaskError(f"missing stopword file: {path}")
    return {line.strip().lower() for line in
            path.read_text(encoding="utf-8").splitlines() if line.strip()}


def _tweet_text(line: str) -> str:
    import json
    return json.loads(line).get("text") or ""


def _terms_mapper(line, stopwords):
    return word_count_mapper(_tweet_text(line), stopwords)


def task_terms(ws: Workspace, engine: str, stopwords_path,
               num_splits: int = 4, num_reducers: int = 2,
               partitions: int = 4, spill_mode: str = "memory",
               extended: bool = False) -> list[TermRow]:
    """Distinct terms over all tweet texts, count descending then term
    ascending; identical for both engines."""
    stopwords = load_stopwords(stopwords_path)
    tweets_path = ws.state().get("tweets_path")
    if tweets_path is None or not ws.dfs.exists(tweets_path):
        raise TaskError("no tweets dataset loaded (run ingest first)")
    if extended and engine == "mapreduce":
        raise TaskError("extended normalization is a dataflow option")
    if engine == "mapreduce":
        spec = JobSpec(input=tweets_path,
                       mapper=partial(_terms_mapper, stopwords=stopwords),
                       reducer=sum_reducer,
                       num_map_splits=num_splits, num_reducers=num_reducers,
                       spill_mode=spill_mode)
        pairs = ws.mr_engine().run_job(spec).output
        rows = [TermRow(term, count) for term, count in pairs]
    elif engine == "dataflow":
        ctx = ws.dataflow()
        normalizer = normalize_line_extended if extended else normalize_line
        ds = ctx.from_text_file(tweets_path, partitions=partitions).map(_tweet_text)
        pairs = term_counts(ds, stopwords, normalizer=normalizer).collect()
        rows = [TermRow(term, count) for count, term in pairs]
    else:
        raise TaskError(f"unknown terms engine: {engine}")
    rows.sort(key=lambda r: r.term)
    rows.sort(key=lambda r: r.count, reverse=True)
    return rows


# ---------------------------------------------------------------------------
# task 3: follow graph
# ---------------------------------------------------------------------------

def task_graph(ws: Workspace, follows_csv, users_table: str | None = None,
               strict: bool = False) -> GraphTaskResult:
    """Users come from the table store (`SELECT id, username FROM users`);
    follows come from a headered CSV file."""
    if users_table is None:
        users_table = USERS_EXTERNAL if ws.catalog.has_table(USERS_EXTERNAL) \
            else USERS_INTERNAL
    if not ws.catalog.has_table(users_table):
        raise TaskError(f"backend not loaded: table {users_table} missing")
    users = ws.catalog.execute("SELECT id, username FROM users",
                               aliases={"users": users_table}).rows
    follows_csv = Path(follows_csv)
    if not follows_csv.exists():
        raise TaskError(f"missing follows file: {follows_csv}")
    edges = graphmod.parse_follows_csv(follows_csv.read_text(encoding="utf-8"))
    g = graphmod.build_graph(users, edges, strict=strict)
    return GraphTaskResult(
        graph=g,
        degrees=graphmod.degrees(g),
        components=graphmod.weak_components(g),
        edge_list=graphmod.export_graph(g, "edge-list"))


# ---------------------------------------------------------------------------
# reports (fixed column order so engine equality is a file comparison)
# ---------------------------------------------------------------------------

def influence_csv(rows: list[InfluenceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["author_id", "impressions", "likes", "quotes",
                     "replies", "retweets", "influence"])
    for row in rows:
        writer.writerow(row.as_tuple())
    return buf.getvalue()


def terms_csv(rows: list[TermRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["term", "count"])
    for row in rows:
        writer.writerow([row.term, row.count])
    return buf.getvalue()


def degrees_csv(report: graphmod.DegreeReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "in_degree", "out_degree"])
    for row in report.rows():
        writer.writerow(row)
    return buf.getvalue()


def components_csv(components: dict[str, str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "component"])
    for vertex in sorted(components):
        writer.writerow([vertex, components[vertex]])
    return buf.getvalue()


def write_report(ws: Workspace, run_id: str, filename: str,
                 content: str | bytes) -> Path:
    out_dir = ws.report_dir / run_id
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename
    if isinstance(content, str):
        path.write_text(content, encoding="utf-8")
    else:
        path.write_bytes(content)
    return path
