"""Labelled directed acyclic graphs and the transforms the benchmarks need."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

INPUT = "input"
OUTPUT = "output"
ADD = "add"
ZERO_OPS = frozenset({"zeroize", "none"})


class GraphError(ValueError):
    """Raised for malformed or structurally invalid graph documents."""


@dataclass(frozen=True)
class LabeledDigraph:
    """A DAG whose nodes carry operation labels.

    Node order is significant: it defines the canonical key and the index
    space of ``edges``. Edges are stored sorted, so equality ignores the
    order they were given in.
    """

    node_labels: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    source: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "node_labels", tuple(str(s) for s in self.node_labels))
        edges = [(int(u), int(v)) for u, v in self.edges]
        _check_structure(self.node_labels, edges)
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_empty(self) -> bool:
        return not self.node_labels

    def in_neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in self.node_labels]
        for u, v in self.edges:
            nbrs[v].append(u)
        return nbrs

    def out_neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in self.node_labels]
        for u, v in self.edges:
            nbrs[u].append(v)
        return nbrs

    def topological_order(self) -> list[int]:
        return _toposort(len(self.node_labels), self.edges)

    def to_dict(self) -> dict[str, Any]:
        return {"nodes": list(self.node_labels), "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _toposort(n: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    indeg = [0] * n
    out: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        out[u].append(v)
        indeg[v] += 1
    ready = [i for i in range(n) if indeg[i] == 0]
    order: list[int] = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(order) != n:
        raise GraphError("edge set contains a cycle")
    return order


def _check_structure(labels: Sequence[str], edges: Sequence[tuple[int, int]]) -> None:
    n = len(labels)
    seen = set()
    for i, (u, v) in enumerate(edges):
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edges[{i}]: endpoint out of range for {n} nodes: {[u, v]}")
        if u == v:
            raise GraphError(f"edges[{i}]: self-loop on node {u}")
        if (u, v) in seen:
            raise GraphError(f"edges[{i}]: duplicate edge {[u, v]}")
        seen.add((u, v))
    _toposort(n, edges)


EMPTY_GRAPH = LabeledDigraph((), ())


@dataclass(frozen=True)
class SearchSpaceSpec:
    min_nodes: int
    max_nodes: int
    max_edges: int
    allowed_labels: frozenset[str]
    input_label: str = INPUT
    output_label: str = OUTPUT
    require_single_io: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "allowed_labels", frozenset(self.allowed_labels))
        if self.input_label not in self.allowed_labels or self.output_label not in self.allowed_labels:
            raise ValueError("allowed_labels must contain the input and output labels")
        if not (self.max_nodes >= self.min_nodes >= 2):
            raise ValueError("need max_nodes >= min_nodes >= 2")
        if self.max_edges < self.max_nodes - 1:
            raise ValueError("need max_edges >= max_nodes - 1")

    @property
    def op_labels(self) -> list[str]:
        """Labels an intermediate node may take, sorted for reproducible sampling."""
        return sorted(self.allowed_labels - {self.input_label, self.output_label})

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_nodes": self.min_nodes,
            "max_nodes": self.max_nodes,
            "max_edges": self.max_edges,
            "allowed_labels": sorted(self.allowed_labels),
            "input_label": self.input_label,
            "output_label": self.output_label,
            "require_single_io": self.require_single_io,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SearchSpaceSpec:
        return cls(
            min_nodes=int(d["min_nodes"]),
            max_nodes=int(d["max_nodes"]),
            max_edges=int(d["max_edges"]),
            allowed_labels=frozenset(d["allowed_labels"]),
            input_label=d.get("input_label", INPUT),
            output_label=d.get("output_label", OUTPUT),
            require_single_io=bool(d.get("require_single_io", True)),
        )


# 7 nodes / 9 edges, three operation choices.
N101_SPEC = SearchSpaceSpec(
    min_nodes=2,
    max_nodes=7,
    max_edges=9,
    allowed_labels=frozenset({INPUT, OUTPUT, "conv1x1", "conv3x3", "maxpool3x3"}),
)

# 4-node, 6-edge edge-labelled cell after conversion to node labels
# (4 structural nodes + up to 6 operation nodes).
N201_SPEC = SearchSpaceSpec(
    min_nodes=3,
    max_nodes=10,
    max_edges=12,
    allowed_labels=frozenset({INPUT, OUTPUT, ADD, "conv1x1", "conv3x3", "avgpool3x3", "skip_connect"}),
)


def violations(g: LabeledDigraph, spec: SearchSpaceSpec) -> list[str]:
    """Return the reasons ``g`` is not a member of ``spec`` (empty when valid)."""
    problems = []
    if g.is_empty:
        return ["graph is empty"]
    if not spec.min_nodes <= g.n_nodes <= spec.max_nodes:
        problems.append(f"node count {g.n_nodes} outside [{spec.min_nodes}, {spec.max_nodes}]")
    if g.n_edges > spec.max_edges:
        problems.append(f"edge count {g.n_edges} exceeds {spec.max_edges}")
    bad = sorted(set(g.node_labels) - spec.allowed_labels)
    if bad:
        problems.append(f"labels not allowed: {bad}")
    if spec.require_single_io:
        n_in = g.node_labels.count(spec.input_label)
        n_out = g.node_labels.count(spec.output_label)
        if n_in != 1 or n_out != 1:
            problems.append(f"expected one input and one output node, got {n_in} and {n_out}")
        else:
            i, o = g.node_labels.index(spec.input_label), g.node_labels.index(spec.output_label)
            if any(v == i for _, v in g.edges):
                problems.append("input node has incoming edges")
            if any(u == o for u, _ in g.edges):
                problems.append("output node has outgoing edges")
    if not problems and prune_disconnected(g, spec) != g:
        problems.append("graph has nodes off every input->output path")
    return problems


def is_valid(g: LabeledDigraph, spec: SearchSpaceSpec) -> bool:
    return not violations(g, spec)


def _parse_node_labelled(doc: dict[str, Any]) -> LabeledDigraph:
    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not all(isinstance(s, str) for s in nodes):
        raise GraphError("nodes: expected a list of strings")
    edges = doc.get("edges", [])
    if not isinstance(edges, list):
        raise GraphError("edges: expected a list")
    pairs = []
    for i, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(type(x) is int for x in e)):
            raise GraphError(f"edges[{i}]: expected a pair of integers, got {e!r}")
        pairs.append((e[0], e[1]))
    return LabeledDigraph(tuple(nodes), tuple(pairs))


def _parse_edge_labelled(doc: dict[str, Any]) -> LabeledDigraph:
    n = doc["n_nodes"]
    if type(n) is not int or n < 0:
        raise GraphError("n_nodes: expected a non-negative integer")
    edges = doc.get("edges", [])
    if not isinstance(edges, list):
        raise GraphError("edges: expected a list")
    triples = []
    for i, e in enumerate(edges):
        if not isinstance(e, dict) or not {"from", "to", "op"} <= e.keys():
            raise GraphError(f"edges[{i}]: expected an object with from/to/op")
        u, v, op = e["from"], e["to"], e["op"]
        if type(u) is not int or type(v) is not int or not isinstance(op, str):
            raise GraphError(f"edges[{i}]: from/to must be integers and op a string")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edges[{i}]: endpoint out of range for {n} nodes: {[u, v]}")
        if u == v:
            raise GraphError(f"edges[{i}]: self-loop on node {u}")
        triples.append((u, v, op))
    return edge_to_node_transform(n, triples)


def parse_graph(text: str | bytes | dict[str, Any]) -> LabeledDigraph:
    """Parse a node-labelled or edge-labelled graph document.

    Edge-labelled documents (``n_nodes`` key) are converted with
    :func:`edge_to_node_transform`.
    """
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise GraphError("document root must be an object")
    if "nodes" in doc:
        return _parse_node_labelled(doc)
    if "n_nodes" in doc:
        return _parse_edge_labelled(doc)
    raise GraphError("document has neither 'nodes' nor 'n_nodes'")


def edge_to_node_transform(
    n_nodes: int, labelled_edges: Sequence[tuple[int, int, str]]
) -> LabeledDigraph:
    """Turn every labelled edge (u, v, op) into a node ``op`` wired u -> op -> v.

    Structural node 0 becomes ``input``, the last one ``output`` and the rest
    ``add``. Edges whose op is a zero operation are dropped.
    """
    _toposort(n_nodes, [(u, v) for u, v, _ in labelled_edges])
    labels = [ADD] * n_nodes
    if n_nodes:
        labels[0] = INPUT
        labels[-1] = OUTPUT
    edges: list[tuple[int, int]] = []
    for u, v, op in labelled_edges:
        if op in ZERO_OPS:
            continue
        labels.append(op)
        w = len(labels) - 1
        edges += [(u, w), (w, v)]
    return LabeledDigraph(tuple(labels), tuple(edges))


def prune_disconnected(g: LabeledDigraph, spec: SearchSpaceSpec | None = None) -> LabeledDigraph:
    """Keep only nodes lying on some input->output path.

    Returns :data:`EMPTY_GRAPH` when no such path exists. Surviving nodes keep
    their relative order.
    """
    in_label = spec.input_label if spec else INPUT
    out_label = spec.output_label if spec else OUTPUT
    sources = [i for i, s in enumerate(g.node_labels) if s == in_label]
    sinks = [i for i, s in enumerate(g.node_labels) if s == out_label]
    fwd = _reach(sources, g.out_neighbors())
    bwd = _reach(sinks, g.in_neighbors())
    keep = [i for i in range(g.n_nodes) if i in fwd and i in bwd]
    if not keep:
        return EMPTY_GRAPH
    if len(keep) == g.n_nodes:
        return g
    remap = {old: new for new, old in enumerate(keep)}
    edges = tuple((remap[u], remap[v]) for u, v in g.edges if u in remap and v in remap)
    return LabeledDigraph(tuple(g.node_labels[i] for i in keep), edges, g.source)


def _reach(starts: Iterable[int], nbrs: list[list[int]]) -> set[int]:
    seen = set(starts)
    stack = list(seen)
    while stack:
        u = stack.pop()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def canonical_key(g: LabeledDigraph) -> str:
    """Order-dependent key: labels, then the upper-triangular adjacency bits.

    Not isomorphism invariant. Edges pointing backwards in the stored order
    are listed explicitly after a ``~`` so the key stays injective.
    """
    n = g.n_nodes
    es = set(g.edges)
    bits = "".join("1" if (i, j) in es else "0" for i in range(n) for j in range(i + 1, n))
    back = sorted((u, v) for u, v in g.edges if u > v)
    key = "|".join(g.node_labels) + "#" + bits
    if back:
        key += "~" + ";".join(f"{u}>{v}" for u, v in back)
    return key
