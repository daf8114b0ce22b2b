"""Property graph over user vertices and directed follow edges.

Duplicate edges collapse to one distinct edge with a multiplicity count;
degrees and components are computed over distinct edges.  Vertex "community"
structure is reported as weakly connected components (direction ignored),
each labelled by its smallest member id.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import GraphError


@dataclass
class PropertyGraph:
    vertices: dict[str, str] = field(default_factory=dict)  # id -> username
    edge_multiplicity: dict[tuple[str, str], int] = field(default_factory=dict)
    implicit_vertex_count: int = 0  # endpoints absent from the user rows

    def distinct_edges(self) -> list[tuple[str, str]]:
        return sorted(self.edge_multiplicity)

    @property
    def edge_count(self) -> int:
        return len(self.edge_multiplicity)


@dataclass
class DegreeReport:
    in_degree: dict[str, int]
    out_degree: dict[str, int]

    def rows(self) -> list[tuple[str, int, int]]:
        return [(v, self.in_degree[v], self.out_degree[v])
                for v in sorted(self.in_degree)]


def build_graph(users, follows, strict: bool = False,
                allow_self_loops: bool = False) -> PropertyGraph:
    """Assemble a graph from (id, username) rows and (src, dst) follow rows.

    In strict mode an edge endpoint missing from the user rows is an error;
    otherwise it becomes an implicit vertex with an empty username and is
    counted in `implicit_vertex_count`.
    """
    g = PropertyGraph()
    for user_id, username in users:
        if user_id in g.vertices:
            raise GraphError(f"duplicate user id: {user_id}")
        g.vertices[user_id] = username
    for src, dst in follows:
        if src == dst and not allow_self_loops:
            raise GraphError(f"self-loop on {src} (allow_self_loops not set)")
        for endpoint in (src, dst):
            if endpoint not in g.vertices:
                if strict:
                    raise GraphError(
                        f"edge ({src}, {dst}) references unknown user {endpoint}")
                g.vertices[endpoint] = ""
                g.implicit_vertex_count += 1
        key = (src, dst)
        g.edge_multiplicity[key] = g.edge_multiplicity.get(key, 0) + 1
    return g


def degrees(g: PropertyGraph) -> DegreeReport:
    """Exact in/out degree per vertex, counting distinct edges once."""
    in_deg = {v: 0 for v in g.vertices}
    out_deg = {v: 0 for v in g.vertices}
    for src, dst in g.edge_multiplicity:
        out_deg[src] += 1
        in_deg[dst] += 1
    return DegreeReport(in_degree=in_deg, out_degree=out_deg)


def weak_components(g: PropertyGraph) -> dict[str, str]:
    """Union-find over the undirected closure; component id is the smallest
    vertex id in the component."""
    parent = {v: v for v in g.vertices}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    for src, dst in g.edge_multiplicity:
        a, b = find(src), find(dst)
        if a != b:
            # keep the smaller id as the root so labels are canonical
            if b < a:
                a, b = b, a
            parent[b] = a
    return {v: find(v) for v in g.vertices}


def export_graph(g: PropertyGraph, format: str = "edge-list") -> bytes:
    """Deterministic serialization: vertices and edges sorted by id."""
    if format == "edge-list":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["src", "dst"])
        for src, dst in g.distinct_edges():
            writer.writerow([src, dst])
        return buf.getvalue().encode("utf-8")
    if format == "dot":
        lines = ["digraph follows {"]
        for v in sorted(g.vertices):
            label = g.vertices[v] or v
            lines.append(f'  "{v}" [label="{label}"];')
        for src, dst in g.distinct_edges():
            lines.append(f'  "{src}" -> "{dst}";')
        lines.append("}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise GraphError(f"unknown export format: {format}")


def parse_follows_csv(text: str) -> list[tuple[str, str]]:
    """Follow edges from CSV with a `src,dst` header row."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["src", "dst"]:
        raise GraphError('follows CSV must start with a "src,dst" header row')
    edges = []
    for record in reader:
        src, dst = record["src"], record["dst"]
        if src is None or dst is None or not src or not dst:
            raise GraphError(f"bad follows row: {record}")
        edges.append((src, dst))
    return edges


def import_edge_list(data: bytes) -> PropertyGraph:
    """Rebuild a graph from an edge-list export (vertices become implicit)."""
    return build_graph([], parse_follows_csv(data.decode("utf-8")))
