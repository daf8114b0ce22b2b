"""Single command-line entrypoint wiring all engines together.

Exit codes: 0 success, 1 usage error, 2 operation error.  Diagnostics go to
stderr; data (file contents, CSV results, reports) goes to stdout.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click

from . import bench as benchmod
from . import graph as graphmod
from . import tasks as tasksmod
from .config import load_config
from .dataflow import normalize_line, normalize_line_extended, term_counts
from .errors import MiniplexError
from .mr_engine import JobSpec, sum_reducer, word_count_mapper
from .tablestore import (TableSchema, tweet_table_schema, user_table_schema)
from .workspace import ALL_TARGETS, Workspace


def get_workspace(ctx: click.Context) -> Workspace:
    """Build the workspace lazily so `--help` has no side effects."""
    params = ctx.obj
    if params.get("workspace") is None:
        config_path = params.get("config")
        if config_path is None and Path("miniplex.toml").exists():
            config_path = "miniplex.toml"
        config = load_config(config_path, root=params.get("root"),
                             workers=params.get("workers"))
        params["workspace"] = Workspace(config)
    return params["workspace"]


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config file (miniplex.toml by default).")
@click.option("--root", type=click.Path(file_okay=False), default=None,
              help="Workspace root directory.")
@click.option("--workers", type=int, default=None, help="Worker thread count.")
@click.pass_context
def cli(ctx, config, root, workers):
    """miniplex: desk-scale polyglot data stack."""
    ctx.obj = {"config": config, "root": root, "workers": workers,
               "workspace": None}


# ---------------------------------------------------------------------------
# dfs
# ---------------------------------------------------------------------------

@cli.group()
def dfs():
    """Replicated block store."""


@dfs.command("put")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("path")
@click.option("--block-size", type=int, default=None)
@click.option("--replication", type=int, default=None)
@click.pass_context
def dfs_put(ctx, source, path, block_size, replication):
    ws = get_workspace(ctx)
    meta = ws.dfs.put_file(path, Path(source).read_bytes(),
                           block_size=block_size, replication=replication)
    click.echo(f"stored {meta.path}: {meta.total_length} bytes in "
               f"{len(meta.blocks)} block(s)", err=True)


@dfs.command("get")
@click.argument("path")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None,
              help="Write to a local file instead of stdout.")
@click.pass_context
def dfs_get(ctx, path, out):
    ws = get_workspace(ctx)
    data = ws.dfs.get_file(path)
    if out:
        Path(out).write_bytes(data)
    else:
        click.get_binary_stream("stdout").write(data)


@dfs.command("ls")
@click.pass_context
def dfs_ls(ctx):
    ws = get_workspace(ctx)
    for path in ws.dfs.list_files():
        meta = ws.dfs.file_meta(path)
        click.echo(f"{path}\t{meta.total_length}\t{len(meta.blocks)}")


@dfs.command("locate")
@click.argument("path")
@click.pass_context
def dfs_locate(ctx, path):
    ws = get_workspace(ctx)
    for block in ws.dfs.locate(path):
        flags = "under-replicated" if block.under_replicated else "ok"
        click.echo(f"{block.index}\t{block.block_id}\t{block.length}\t"
                   f"{','.join(map(str, block.replicas))}\t{flags}")


@dfs.command("fail-node")
@click.argument("node", type=int)
@click.pass_context
def dfs_fail_node(ctx, node):
    ws = get_workspace(ctx)
    ws.dfs.fail_node(node)
    click.echo(f"node {node} marked unavailable", err=True)


@dfs.command("recover-node")
@click.argument("node", type=int)
@click.pass_context
def dfs_recover_node(ctx, node):
    ws = get_workspace(ctx)
    ws.dfs.recover_node(node)
    click.echo(f"node {node} marked available", err=True)


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

@cli.group()
def ingest():
    """Land, preprocess and load tweet batches."""


@ingest.command("land")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def ingest_land(ctx, source):
    ws = get_workspace(ctx)
    manifest = ws.ingestor.land(source)
    click.echo(manifest.batch_id)
    click.echo(f"landed at {manifest.raw_path}", err=True)


@ingest.command("preprocess")
@click.argument("batch")
@click.pass_context
def ingest_preprocess(ctx, batch):
    ws = get_workspace(ctx)
    tweets_path, users_path, manifest = ws.ingestor.preprocess(batch)
    click.echo(json.dumps(manifest.stats, indent=1))
    click.echo(f"tweets: {tweets_path}\nusers: {users_path}", err=True)


@ingest.command("load")
@click.argument("batch")
@click.option("--targets", default=",".join(ALL_TARGETS),
              help="Comma-separated subset of "
                   "tablestore-external,tablestore-internal,cfstore.")
@click.pass_context
def ingest_load(ctx, batch, targets):
    ws = get_workspace(ctx)
    report = ws.load_all(batch, tuple(t.strip() for t in targets.split(",") if t))
    click.echo(json.dumps(report, indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# table / sql
# ---------------------------------------------------------------------------

def _schema_from_option(schema: str, name: str) -> TableSchema:
    if schema == "tweets":
        return tweet_table_schema(name)
    if schema == "users":
        return user_table_schema(name)
    path = Path(schema)
    if not path.exists():
        raise click.UsageError(
            f"--schema must be 'tweets', 'users' or a JSON schema file; "
            f"got {schema!r}")
    return TableSchema.from_dict(
        json.loads(path.read_text(encoding="utf-8"))).renamed(name)


@cli.group()
def table():
    """SQL table management."""


@table.command("create-external")
@click.argument("name")
@click.argument("source")
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]),
              default="jsonl")
@click.option("--schema", default="tweets",
              help="'tweets', 'users' or a JSON schema file.")
@click.pass_context
def table_create_external(ctx, name, source, fmt, schema):
    ws = get_workspace(ctx)
    ws.catalog.create_external_table(_schema_from_option(schema, name),
                                     source, fmt)
    click.echo(f"external table {name} over {source}", err=True)


@table.command("materialize")
@click.argument("source_table")
@click.argument("name")
@click.pass_context
def table_materialize(ctx, source_table, name):
    ws = get_workspace(ctx)
    schema = ws.catalog.table(source_table).schema.renamed(name)
    created = ws.catalog.create_internal_table_as(schema, source_table)
    click.echo(f"internal table {name}: {created.row_count} rows", err=True)


@table.command("drop")
@click.argument("name")
@click.pass_context
def table_drop(ctx, name):
    ws = get_workspace(ctx)
    ws.catalog.drop(name)
    click.echo(f"dropped {name}", err=True)


@cli.command("sql")
@click.argument("query")
@click.pass_context
def sql_command(ctx, query):
    """Run a query; results print as CSV."""
    ws = get_workspace(ctx)
    result = ws.catalog.execute(query)
    click.echo(result.to_csv(), nl=False)


# ---------------------------------------------------------------------------
# cf
# ---------------------------------------------------------------------------

@cli.group()
def cf():
    """Column-family store."""


@cf.command("create")
@click.argument("name")
@click.option("--families", required=True, help="Comma-separated families.")
@click.pass_context
def cf_create(ctx, name, families):
    ws = get_workspace(ctx)
    ws.cfstore.create_table(name, {f.strip() for f in families.split(",") if f.strip()})
    click.echo(f"created cf table {name}", err=True)


@cf.command("put")
@click.argument("name")
@click.argument("row")
@click.argument("family")
@click.argument("qualifier")
@click.argument("value")
@click.pass_context
def cf_put(ctx, name, row, family, qualifier, value):
    ws = get_workspace(ctx)
    t = ws.cfstore.table(name)
    t.put(row, family, qualifier, value)
    t.flush()


@cf.command("get")
@click.argument("name")
@click.argument("row")
@click.pass_context
def cf_get(ctx, name, row):
    ws = get_workspace(ctx)
    for cell in ws.cfstore.table(name).get(row):
        click.echo(f"{cell.family}:{cell.qualifier}\t{cell.value}")


@cf.command("scan")
@click.argument("name")
@click.option("--family", required=True)
@click.option("--qualifiers", default=None, help="Comma-separated qualifiers.")
@click.option("--start", default=None)
@click.option("--end", default=None)
@click.pass_context
def cf_scan(ctx, name, family, qualifiers, start, end):
    ws = get_workspace(ctx)
    quals = None
    if qualifiers:
        quals = {q.strip() for q in qualifiers.split(",") if q.strip()}
    for row, cells in ws.cfstore.table(name).scan(family, quals, start, end):
        for cell in cells:
            click.echo(f"{row}\t{cell.family}:{cell.qualifier}\t{cell.value}")


@cf.command("load-tweets")
@click.argument("name")
@click.argument("source")
@click.pass_context
def cf_load_tweets(ctx, name, source):
    """Load tweets from a JSON Lines file in the block store."""
    from .cfstore import load_tweets
    from .ingest import read_jsonl
    ws = get_workspace(ctx)
    report = load_tweets(ws.cfstore.table(name), read_jsonl(ws.dfs, source))
    click.echo(f"loaded {report.loaded}, rejected {report.rejected}")


# ---------------------------------------------------------------------------
# mr / flow
# ---------------------------------------------------------------------------

@cli.group()
def mr():
    """MapReduce engine."""


@mr.command("wordcount")
@click.option("--input", "input_path", required=True)
@click.option("--stopwords", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--splits", type=int, default=4)
@click.option("--reducers", type=int, default=2)
@click.option("--spill", type=click.Choice(["mem", "disk"]), default="mem")
@click.pass_context
def mr_wordcount(ctx, input_path, stopwords, splits, reducers, spill):
    from functools import partial
    ws = get_workspace(ctx)
    stop = tasksmod.load_stopwords(stopwords)
    spec = JobSpec(input=input_path,
                   mapper=partial(word_count_mapper, stopwords=stop),
                   reducer=sum_reducer, num_map_splits=splits,
                   num_reducers=reducers,
                   spill_mode="disk" if spill == "disk" else "memory")
    result = ws.mr_engine().run_job(spec)
    for word, count in result.output:
        click.echo(f"{word}\t{count}")
    timings = " ".join(f"{k}={v * 1000:.1f}ms"
                       for k, v in result.phase_timings.items())
    click.echo(f"counters: {result.counters}\nphases: {timings}", err=True)


@cli.group()
def flow():
    """In-memory dataflow engine."""


@flow.command("wordcount")
@click.option("--input", "input_path", required=True)
@click.option("--stopwords", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--partitions", type=int, default=4)
@click.option("--extended-normalization", is_flag=True, default=False)
@click.pass_context
def flow_wordcount(ctx, input_path, stopwords, partitions, extended_normalization):
    """Word counts as `count<TAB>word` lines, descending."""
    ws = get_workspace(ctx)
    stop = tasksmod.load_stopwords(stopwords)
    normalizer = (normalize_line_extended if extended_normalization
                  else normalize_line)
    ds = ws.dataflow().from_text_file(input_path, partitions=partitions)
    for count, word in term_counts(ds, stop, normalizer=normalizer).collect():
        click.echo(f"{count}\t{word}")


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------

def _load_users_arg(ws, users: str | None):
    if users is None:
        return None
    if users.startswith("table:"):
        name = users.split(":", 1)[1]
        return ws.catalog.execute("SELECT id, username FROM users",
                                  aliases={"users": name}).rows
    path = Path(users)
    if not path.exists():
        raise click.UsageError(f"users source not found: {users}")
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != \
            ["id", "username"]:
        raise click.UsageError('users CSV needs an "id,username" header')
    return [(r["id"], r["username"]) for r in reader]


def _build_graph_from_args(ctx, users, follows, strict):
    ws = get_workspace(ctx)
    rows = _load_users_arg(ws, users) or []
    edges = graphmod.parse_follows_csv(Path(follows).read_text(encoding="utf-8"))
    return graphmod.build_graph(rows, edges, strict=strict)


@cli.group()
def graph():
    """Follow-graph analytics."""


_graph_options = [
    click.option("--users", default=None,
                 help="Users CSV file or table:<name> to pull from the catalog."),
    click.option("--follows", required=True,
                 type=click.Path(exists=True, dir_okay=False)),
    click.option("--strict", is_flag=True, default=False),
]


def graph_command(name):
    def wrap(fn):
        for option in reversed(_graph_options):
            fn = option(fn)
        return graph.command(name)(click.pass_context(fn))
    return wrap


@graph_command("build")
def graph_build(ctx, users, follows, strict):
    g = _build_graph_from_args(ctx, users, follows, strict)
    click.echo(f"vertices={len(g.vertices)} edges={g.edge_count} "
               f"implicit={g.implicit_vertex_count}")


@graph_command("degrees")
def graph_degrees(ctx, users, follows, strict):
    g = _build_graph_from_args(ctx, users, follows, strict)
    click.echo(tasksmod.degrees_csv(graphmod.degrees(g)), nl=False)


@graph_command("components")
def graph_components(ctx, users, follows, strict):
    g = _build_graph_from_args(ctx, users, follows, strict)
    click.echo(tasksmod.components_csv(graphmod.weak_components(g)), nl=False)


@graph.command("export")
@click.option("--users", default=None)
@click.option("--follows", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--strict", is_flag=True, default=False)
@click.option("--format", "fmt", type=click.Choice(["edge-list", "dot"]),
              default="edge-list")
@click.pass_context
def graph_export(ctx, users, follows, strict, fmt):
    g = _build_graph_from_args(ctx, users, follows, strict)
    click.get_binary_stream("stdout").write(graphmod.export_graph(g, fmt))


# ---------------------------------------------------------------------------
# task
# ---------------------------------------------------------------------------

@cli.group()
def task():
    """The three routed analyses."""


@task.command("influence")
@click.option("--engine", type=click.Choice(tasksmod.TASK_INFLUENCE_ENGINES),
              default="sql-external")
@click.option("--formula", type=click.Choice(tasksmod.FORMULAS), default="prose")
@click.option("--scope", default=None, help="Keep tweets containing this keyword.")
@click.option("--run-id", default=None)
@click.pass_context
def task_influence_cmd(ctx, engine, formula, scope, run_id):
    ws = get_workspace(ctx)
    rows = tasksmod.task_influence(ws, engine, formula, scope)
    content = tasksmod.influence_csv(rows)
    run_id = run_id or f"task_influence_{engine}_{formula}"
    path = tasksmod.write_report(ws, run_id, "influence.csv", content)
    click.echo(content, nl=False)
    click.echo(f"report: {path}", err=True)


@task.command("terms")
@click.option("--engine", type=click.Choice(["mr", "flow"]), default="flow")
@click.option("--stopwords", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--run-id", default=None)
@click.pass_context
def task_terms_cmd(ctx, engine, stopwords, run_id):
    ws = get_workspace(ctx)
    engine_name = "mapreduce" if engine == "mr" else "dataflow"
    rows = tasksmod.task_terms(ws, engine_name, stopwords)
    content = tasksmod.terms_csv(rows)
    run_id = run_id or f"task_terms_{engine_name}"
    path = tasksmod.write_report(ws, run_id, "terms.csv", content)
    click.echo(content, nl=False)
    click.echo(f"report: {path}", err=True)


@task.command("graph")
@click.option("--follows", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--users-table", default=None)
@click.option("--strict", is_flag=True, default=False)
@click.option("--run-id", default="task_graph")
@click.pass_context
def task_graph_cmd(ctx, follows, users_table, strict, run_id):
    ws = get_workspace(ctx)
    result = tasksmod.task_graph(ws, follows, users_table, strict)
    tasksmod.write_report(ws, run_id, "degrees.csv",
                          tasksmod.degrees_csv(result.degrees))
    tasksmod.write_report(ws, run_id, "components.csv",
                          tasksmod.components_csv(result.components))
    path = tasksmod.write_report(ws, run_id, "edges.csv", result.edge_list)
    click.echo(str(path.parent))
    click.echo(f"vertices={len(result.graph.vertices)} "
               f"edges={result.graph.edge_count}", err=True)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

@cli.group("bench")
def bench_group():
    """Dataset generation and benchmark runs."""


@bench_group.command("gen")
@click.option("--tweets", type=int, required=True)
@click.option("--users", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--vocab-size", type=int, default=1000)
@click.option("--zipf-s", type=float, default=1.2)
@click.option("--follow-density", type=float, default=0.02)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def bench_gen(tweets, users, seed, vocab_size, zipf_s, follow_density, out):
    spec = benchmod.GenSpec(n_tweets=tweets, n_users=users, seed=seed,
                            vocab_size=vocab_size, zipf_s=zipf_s,
                            follow_density=follow_density)
    manifest = benchmod.generate(spec, out)
    click.echo(json.dumps(manifest, indent=1, sort_keys=True))


@bench_group.command("run")
@click.option("--matrix", default="all",
              help='"all" or comma-separated task:engine cells.')
@click.option("--reps", type=int, default=benchmod.DEFAULT_REPETITIONS)
@click.option("--dataset", required=True, help="Label recorded in results.")
@click.option("--stopwords", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--follows", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--formula", type=click.Choice(tasksmod.FORMULAS), default="prose")
@click.option("--run-id", default=None)
@click.option("--cluster-refs", is_flag=True, default=False,
              help="Attach 3-node cluster reference timings (500K dataset).")
@click.pass_context
def bench_run(ctx, matrix, reps, dataset, stopwords, follows, formula,
              run_id, cluster_refs):
    ws = get_workspace(ctx)
    cells = benchmod.parse_matrix(matrix)
    report = benchmod.run_bench(ws, cells, dataset, repetitions=reps,
                                stopwords=stopwords, follows=follows,
                                formula=formula)
    run_id = run_id or f"bench_{dataset}"
    out_dir = benchmod.save_report(report, ws.report_dir / "bench" / run_id,
                                   cluster_refs)
    click.echo(benchmod.render_report(report, "csv", cluster_refs).decode(),
               nl=False)
    click.echo(f"saved: {out_dir}", err=True)


@bench_group.command("report")
@click.option("--run-id", default=None,
              help="Saved run id (defaults to the most recent).")
@click.option("--format", "fmt",
              type=click.Choice(["csv", "md", "markdown", "svg", "svg-bars"]),
              default="csv")
@click.option("--cluster-refs", is_flag=True, default=False)
@click.pass_context
def bench_report(ctx, run_id, fmt, cluster_refs):
    ws = get_workspace(ctx)
    bench_dir = ws.report_dir / "bench"
    if run_id is None:
        candidates = sorted(p.name for p in bench_dir.glob("*")
                            if (p / "report.json").exists())
        if not candidates:
            raise benchmod.BenchError(f"no saved bench runs under {bench_dir}")
        run_id = candidates[-1]
    report = benchmod.load_report(bench_dir / run_id)
    click.get_binary_stream("stdout").write(
        benchmod.render_report(report, fmt, cluster_refs))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except MiniplexError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
