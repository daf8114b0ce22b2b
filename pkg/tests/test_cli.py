import json
from pathlib import Path

import pytest

from miniplex.cli import main
from tests.conftest import tweets_jsonl

ALL_HELP_COMMANDS = [
    [],
    ["dfs"], ["dfs", "put"], ["dfs", "get"], ["dfs", "ls"], ["dfs", "locate"],
    ["dfs", "fail-node"], ["dfs", "recover-node"],
    ["ingest"], ["ingest", "land"], ["ingest", "preprocess"], ["ingest", "load"],
    ["table"], ["table", "create-external"], ["table", "materialize"],
    ["table", "drop"],
    ["sql"],
    ["cf"], ["cf", "create"], ["cf", "put"], ["cf", "get"], ["cf", "scan"],
    ["cf", "load-tweets"],
    ["mr"], ["mr", "wordcount"],
    ["flow"], ["flow", "wordcount"],
    ["graph"], ["graph", "build"], ["graph", "degrees"],
    ["graph", "components"], ["graph", "export"],
    ["task"], ["task", "influence"], ["task", "terms"], ["task", "graph"],
    ["bench"], ["bench", "gen"], ["bench", "run"], ["bench", "report"],
]


def run(args, root=None):
    argv = []
    if root is not None:
        argv += ["--root", str(root)]
    return main(argv + args)


@pytest.fixture
def root(tmp_path):
    return tmp_path / "ws"


@pytest.mark.parametrize("command", ALL_HELP_COMMANDS,
                         ids=[" ".join(c) or "top" for c in ALL_HELP_COMMANDS])
def test_help_has_no_side_effects(tmp_path, command):
    root = tmp_path / "never-created"
    assert run(command + ["--help"], root) == 0
    assert not root.exists()


def test_unknown_subcommand_exits_1(root, capsys):
    assert run(["frobnicate"], root) == 1
    assert "No such command" in capsys.readouterr().err


def test_missing_required_option_exits_1(root):
    assert run(["mr", "wordcount"], root) == 1


def test_operation_error_exits_2(root, capsys):
    assert run(["dfs", "get", "/absent"], root) == 2
    assert "unknown path" in capsys.readouterr().err


def test_dfs_round_trip(root, tmp_path, capsys):
    src = tmp_path / "data.bin"
    src.write_bytes(b"hello blocks" * 20)
    assert run(["dfs", "put", str(src), "/data.bin", "--block-size", "64"], root) == 0
    capsys.readouterr()
    assert run(["dfs", "ls"], root) == 0
    assert capsys.readouterr().out.startswith("/data.bin\t240\t4")
    assert run(["dfs", "locate", "/data.bin"], root) == 0
    assert len(capsys.readouterr().out.splitlines()) == 4
    assert run(["dfs", "get", "/data.bin"], root) == 0
    assert capsys.readouterr().out == "hello blocks" * 20


def test_dfs_failover_via_cli(root, tmp_path, capsys):
    src = tmp_path / "f.txt"
    src.write_bytes(b"x" * 100)
    run(["dfs", "put", str(src), "/f", "--block-size", "40"], root)
    assert run(["dfs", "fail-node", "1"], root) == 0
    capsys.readouterr()
    assert run(["dfs", "get", "/f"], root) == 0
    assert capsys.readouterr().out == "x" * 100
    assert run(["dfs", "recover-node", "1"], root) == 0
    assert run(["dfs", "fail-node", "9"], root) == 2


def test_sql_over_cli_created_table(root, tmp_path, capsys):
    src = tmp_path / "tweets.jsonl"
    src.write_bytes(tweets_jsonl())
    run(["dfs", "put", str(src), "/tw.jsonl"], root)
    assert run(["table", "create-external", "tweets", "/tw.jsonl",
                "--schema", "tweets"], root) == 0
    capsys.readouterr()
    assert run(["sql", "SELECT author_id, SUM(public_metrics.like_count) AS likes "
                "FROM tweets GROUP BY author_id ORDER BY likes DESC"], root) == 0
    out = capsys.readouterr().out
    assert out == "author_id,likes\nu1,15\nu2,1\n"
    assert run(["table", "materialize", "tweets", "tweets_int"], root) == 0
    assert run(["table", "drop", "tweets_int"], root) == 0


def test_cf_cli(root, capsys):
    assert run(["cf", "create", "t", "--families", "m"], root) == 0
    assert run(["cf", "put", "t", "r1", "m", "likes", "5"], root) == 0
    capsys.readouterr()
    assert run(["cf", "get", "t", "r1"], root) == 0
    assert capsys.readouterr().out == "m:likes\t5\n"
    run(["cf", "put", "t", "r2", "m", "likes", "7"], root)
    capsys.readouterr()
    assert run(["cf", "scan", "t", "--family", "m"], root) == 0
    assert capsys.readouterr().out == "r1\tm:likes\t5\nr2\tm:likes\t7\n"
    assert run(["cf", "scan", "t", "--family", "m", "--start", "r2"], root) == 0
    assert capsys.readouterr().out == "r2\tm:likes\t7\n"


def test_wordcount_cli_both_engines(root, tmp_path, capsys):
    text = tmp_path / "lines.txt"
    text.write_text("The cat, the hat.\ncat!\n", encoding="utf-8")
    stop = tmp_path / "stop.txt"
    stop.write_text("the\n", encoding="utf-8")
    run(["dfs", "put", str(text), "/lines.txt"], root)
    capsys.readouterr()

    assert run(["mr", "wordcount", "--input", "/lines.txt",
                "--stopwords", str(stop), "--splits", "2", "--reducers", "2"],
               root) == 0
    mr_out = capsys.readouterr().out
    assert dict(line.split("\t") for line in mr_out.splitlines()) == \
        {"cat": "1", "cat!": "1", "hat": "1"}

    assert run(["flow", "wordcount", "--input", "/lines.txt",
                "--stopwords", str(stop), "--partitions", "3"], root) == 0
    flow_out = capsys.readouterr().out
    assert flow_out == "1\tcat\n1\tcat!\n1\that\n"

    assert run(["flow", "wordcount", "--input", "/lines.txt",
                "--stopwords", str(stop), "--extended-normalization"], root) == 0
    assert capsys.readouterr().out == "2\tcat\n1\that\n"


def test_graph_cli(root, tmp_path, capsys):
    users = tmp_path / "users.csv"
    users.write_text("id,username\nu1,a\nu2,b\nu3,c\nu4,d\n", encoding="utf-8")
    follows = tmp_path / "follows.csv"
    follows.write_text("src,dst\nu1,u2\nu3,u4\n", encoding="utf-8")

    assert run(["graph", "build", "--users", str(users),
                "--follows", str(follows)], root) == 0
    assert capsys.readouterr().out == "vertices=4 edges=2 implicit=0\n"
    assert run(["graph", "degrees", "--users", str(users),
                "--follows", str(follows)], root) == 0
    assert capsys.readouterr().out.splitlines()[1] == "u1,0,1"
    assert run(["graph", "components", "--users", str(users),
                "--follows", str(follows)], root) == 0
    assert capsys.readouterr().out == \
        "id,component\nu1,u1\nu2,u1\nu3,u3\nu4,u3\n"
    assert run(["graph", "export", "--follows", str(follows),
                "--format", "dot"], root) == 0
    assert capsys.readouterr().out.startswith("digraph follows {")


def test_full_pipeline_via_cli(root, tmp_path, capsys):
    from miniplex.bench import GenSpec, generate
    gen_dir = tmp_path / "gen"
    generate(GenSpec(n_tweets=60, n_users=8, seed=11, vocab_size=30,
                     follow_density=0.2), gen_dir)
    stop = tmp_path / "stop.txt"
    stop.write_text("w0\n", encoding="utf-8")

    assert run(["ingest", "land", str(gen_dir / "tweets.jsonl")], root) == 0
    batch = capsys.readouterr().out.strip()
    assert run(["ingest", "preprocess", batch], root) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["emitted_tweets"] == 60
    assert run(["ingest", "load", batch], root) == 0
    capsys.readouterr()

    outputs = {}
    for engine in ("sql-external", "sql-internal", "cf-scan"):
        assert run(["task", "influence", "--engine", engine,
                    "--formula", "verbatim"], root) == 0
        outputs[engine] = capsys.readouterr().out
    assert len(set(outputs.values())) == 1

    for engine in ("mr", "flow"):
        assert run(["task", "terms", "--engine", engine,
                    "--stopwords", str(stop)], root) == 0
        outputs[f"terms_{engine}"] = capsys.readouterr().out
    assert outputs["terms_mr"] == outputs["terms_flow"]

    assert run(["task", "graph", "--follows", str(gen_dir / "follows.csv")],
               root) == 0
    report_dir = Path(capsys.readouterr().out.strip())
    assert (report_dir / "degrees.csv").exists()

    assert run(["bench", "run", "--matrix", "influence:cf-scan,terms:dataflow",
                "--reps", "2", "--dataset", "tiny",
                "--stopwords", str(stop),
                "--follows", str(gen_dir / "follows.csv")], root) == 0
    bench_csv = capsys.readouterr().out
    assert bench_csv.splitlines()[0].startswith("task,engine,dataset,mean_ms")
    assert run(["bench", "report", "--format", "md"], root) == 0
    assert capsys.readouterr().out.startswith("| task | engine |")


def test_bench_gen_cli(root, tmp_path, capsys):
    out = tmp_path / "gen"
    assert run(["bench", "gen", "--tweets", "10", "--users", "3",
                "--seed", "4", "--out", str(out)], root) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["counts"] == {"tweets": 10, "users": 3,
                                  "distinct_authors": manifest["counts"]["distinct_authors"],
                                  "follows": manifest["counts"]["follows"]}
    assert (out / "tweets.jsonl").exists()


def test_config_file_and_env_root(tmp_path, capsys, monkeypatch):
    config = tmp_path / "miniplex.toml"
    ws_root = tmp_path / "from-config"
    config.write_text(f'root = "{ws_root}"\nnodes = 2\nworkers = 1\n',
                      encoding="utf-8")
    assert main(["--config", str(config), "dfs", "ls"]) == 0
    assert (ws_root / "dfs" / "node1").exists()
    assert not (ws_root / "dfs" / "node2").exists()

    env_root = tmp_path / "from-env"
    monkeypatch.setenv("MINIPLEX_ROOT", str(env_root))
    assert main(["dfs", "ls"]) == 0
    assert env_root.exists()
