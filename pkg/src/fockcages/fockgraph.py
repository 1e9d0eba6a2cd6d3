"""Fock-space graphs: Krylov sectors, sublattice split and component census."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping
from xml.sax.saxutils import escape

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .model import ModelError, ModelSpec, _state_bits, apply_terms, bitstring, full_matrix, matrix_elements

DEFAULT_L_CAP = 20
A, B = 0, 1


class GraphError(RuntimeError):
    pass


@dataclass(frozen=True)
class FockGraph:
    """A connected (or hand-assembled) piece of the Fock-space graph.

    ``edges[i, j]`` is the summed integer amplitude ``<nodes[i]|H|nodes[j]>``.
    ``partition[i]`` is 0 for even occupation parity (A) and 1 for odd (B).
    """

    spec: ModelSpec
    nodes: np.ndarray
    edges: sp.csr_matrix
    partition: np.ndarray

    @cached_property
    def node_index(self) -> dict[int, int]:
        return {int(s): i for i, s in enumerate(self.nodes)}

    @property
    def L(self) -> int:
        return self.spec.L

    def __len__(self):
        return len(self.nodes)

    @property
    def gamma(self) -> np.ndarray:
        """Sublattice sign +1 on A, -1 on B; anticommutes with the edge matrix."""
        return 1 - 2 * self.partition.astype(np.int64)

    def dense(self, dtype=float) -> np.ndarray:
        return self.edges.toarray().astype(dtype)

    def unsigned(self) -> sp.csr_matrix:
        """Binary connectivity (sign-stripped) view of the edges."""
        m = self.edges.copy()
        m.data = np.ones_like(m.data)
        return m

    def sorted_by_state(self) -> "FockGraph":
        """Same graph with nodes in ascending integer order."""
        perm = np.argsort(self.nodes, kind="stable")
        return FockGraph(self.spec, self.nodes[perm], self.edges[perm][:, perm].tocsr(), self.partition[perm])

    def check_bipartite(self) -> None:
        coo = self.edges.tocoo()
        if np.any(self.partition[coo.row] == self.partition[coo.col]):
            raise GraphError("edge inside a sublattice; model is not chiral")


def _graph_from_nodes(spec: ModelSpec, nodes: np.ndarray) -> FockGraph:
    n = len(nodes)
    r, c, v = matrix_elements(spec, nodes)
    # terms that cancel exactly must not count as edges
    if r.size:
        pairs, inv = np.unique(np.stack([r, c]), axis=1, return_inverse=True)
        v = np.bincount(inv.ravel(), weights=v, minlength=pairs.shape[1]).astype(np.int64)
        keep = v != 0
        r, c, v = pairs[0][keep], pairs[1][keep], v[keep]
    order = np.argsort(nodes, kind="stable")
    ranked = nodes[order]
    pos = np.minimum(np.searchsorted(ranked, r), max(n - 1, 0))
    if r.size and not np.array_equal(ranked[pos], r):
        raise GraphError("node set is not closed under H")
    ri = order[pos]
    ci = order[np.searchsorted(ranked, c)]
    edges = sp.coo_matrix((v, (ri, ci)), shape=(n, n), dtype=np.int64).tocsr()
    edges.eliminate_zeros()
    part = np.array([bin(int(s)).count("1") & 1 for s in nodes], dtype=np.int8)
    g = FockGraph(spec, nodes, edges, part)
    g.check_bipartite()
    return g


def build_krylov_graph(spec: ModelSpec, seed, L_cap: int = DEFAULT_L_CAP) -> FockGraph:
    """Breadth-first closure of ``seed`` under H.

    Nodes appear in discovery order; the undiscovered neighbours of each node
    are appended in ascending integer order.
    """
    if spec.L > L_cap:
        raise GraphError(f"L={spec.L} exceeds the cap of {L_cap}")
    s0 = _state_bits(spec, seed)
    seen = {s0}
    order = [s0]
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        for u in sorted(apply_terms(spec, s)):
            if u not in seen:
                seen.add(u)
                order.append(u)
                queue.append(u)
    return _graph_from_nodes(spec, np.array(order, dtype=np.int64))


def subgraph(spec: ModelSpec, nodes) -> FockGraph:
    """Graph on an explicit node list, which must be closed under H."""
    return _graph_from_nodes(spec, np.asarray(nodes, dtype=np.int64))


def bipartition_counts(graph: FockGraph) -> tuple[int, int]:
    n_b = int(graph.partition.sum())
    return len(graph) - n_b, n_b


def imbalance_bound(graph: FockGraph) -> int:
    """||A| - |B||, a lower bound on the number of zero modes in the graph."""
    a, b = bipartition_counts(graph)
    return abs(a - b)


@dataclass(frozen=True)
class BiadjacencyMatrix:
    """Off-diagonal block: rows are B nodes, columns are A nodes."""

    M: sp.csr_matrix
    rows: np.ndarray
    cols: np.ndarray

    @property
    def shape(self):
        return self.M.shape

    def transpose(self) -> "BiadjacencyMatrix":
        return BiadjacencyMatrix(self.M.T.tocsr(), self.cols, self.rows)


def biadjacency(graph: FockGraph) -> BiadjacencyMatrix:
    a_idx = np.flatnonzero(graph.partition == A)
    b_idx = np.flatnonzero(graph.partition == B)
    M = graph.edges[b_idx][:, a_idx].tocsr()
    return BiadjacencyMatrix(M, graph.nodes[b_idx], graph.nodes[a_idx])


def block_reassembly(graph: FockGraph, bi: BiadjacencyMatrix) -> sp.csr_matrix:
    """Rebuild the edge matrix from ``(0 M^T; M 0)`` in the original node order."""
    a_idx = np.flatnonzero(graph.partition == A)
    b_idx = np.flatnonzero(graph.partition == B)
    perm = np.concatenate([a_idx, b_idx])
    na = len(a_idx)
    block = sp.bmat([[None, bi.M.T], [bi.M, None]], format="csr") if len(b_idx) and na else sp.csr_matrix((len(graph), len(graph)), dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return block[inv][:, inv].tocsr()


@dataclass(frozen=True)
class Component:
    size: int
    representative: int
    frozen: bool


@dataclass(frozen=True)
class SectorCensus:
    L: int
    components: tuple[Component, ...]

    @property
    def sizes(self) -> list[int]:
        return [c.size for c in self.components]

    @property
    def singletons(self) -> list[int]:
        return [c.representative for c in self.components if c.size == 1]

    def largest(self) -> Component:
        return max(self.components, key=lambda c: (c.size, -c.representative))

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "n_components": len(self.components),
            "components": [
                {"size": c.size, "representative": bitstring(c.representative, self.L), "frozen": c.frozen}
                for c in self.components
            ],
        }


def full_census(spec: ModelSpec, L_cap: int = DEFAULT_L_CAP) -> SectorCensus:
    """Connected components of the whole ``2**L`` graph, largest first."""
    if spec.L > L_cap:
        raise GraphError(f"L={spec.L} exceeds the cap of {L_cap}")
    m = full_matrix(spec)
    n, labels = connected_components(m, directed=False)
    sizes = np.bincount(labels, minlength=n)
    # first state of each label in ascending order is its representative
    reps = np.full(n, -1, dtype=np.int64)
    first = np.unique(labels, return_index=True)[1]
    reps[labels[first]] = first
    degree = np.diff(m.indptr)
    comps = [Component(int(sizes[k]), int(reps[k]), bool(sizes[k] == 1 and degree[reps[k]] == 0)) for k in range(n)]
    comps.sort(key=lambda c: (-c.size, c.representative))
    return SectorCensus(spec.L, tuple(comps))


def largest_sector(spec: ModelSpec, L_cap: int = DEFAULT_L_CAP) -> FockGraph:
    """Krylov graph of the largest component, seeded from its smallest state."""
    return build_krylov_graph(spec, full_census(spec, L_cap).largest().representative, L_cap)


# --- export ------------------------------------------------------------------

def _highlight_values(graph: FockGraph, highlight: Mapping[int, int] | None) -> list[int]:
    if highlight is None:
        return [0] * len(graph)
    return [int(highlight.get(int(s), 0)) for s in graph.nodes]


def to_json_dict(graph: FockGraph) -> dict:
    coo = sp.triu(graph.edges).tocoo()
    edges = sorted((int(i), int(j), int(a)) for i, j, a in zip(coo.row, coo.col, coo.data))
    return {
        "nodes": [bitstring(int(s), graph.L) for s in graph.nodes],
        "edges": [list(e) for e in edges],
        "partition": [int(p) for p in graph.partition],
    }


def _dot(graph: FockGraph, amp: list[int]) -> str:
    lines = [f'graph "{graph.spec.name}_L{graph.L}" {{']
    for i, s in enumerate(graph.nodes):
        label = "A" if graph.partition[i] == A else "B"
        sign = "+" if amp[i] > 0 else "-" if amp[i] < 0 else "0"
        attrs = f'label="{bitstring(int(s), graph.L)}", sublattice="{label}", amplitude="{amp[i]}", cage="{sign}"'
        if amp[i]:
            attrs += ", style=filled, fillcolor=" + ("red" if amp[i] > 0 else "blue")
        lines.append(f"  n{i} [{attrs}];")
    coo = sp.triu(graph.edges).tocoo()
    for i, j, a in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
        lines.append(f'  n{i} -- n{j} [amplitude="{a}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _graphml(graph: FockGraph, amp: list[int]) -> str:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '  <key id="state" for="node" attr.name="state" attr.type="string"/>',
        '  <key id="sublattice" for="node" attr.name="sublattice" attr.type="string"/>',
        '  <key id="amplitude" for="node" attr.name="amplitude" attr.type="int"/>',
        '  <key id="weight" for="edge" attr.name="amplitude" attr.type="int"/>',
        f'  <graph id="{escape(graph.spec.name)}_L{graph.L}" edgedefault="undirected">',
    ]
    for i, s in enumerate(graph.nodes):
        out.append(
            f'    <node id="n{i}"><data key="state">{bitstring(int(s), graph.L)}</data>'
            f'<data key="sublattice">{"A" if graph.partition[i] == A else "B"}</data>'
            f'<data key="amplitude">{amp[i]}</data></node>'
        )
    coo = sp.triu(graph.edges).tocoo()
    for k, (i, j, a) in enumerate(sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))):
        out.append(f'    <edge id="e{k}" source="n{i}" target="n{j}"><data key="weight">{a}</data></edge>')
    out += ["  </graph>", "</graphml>"]
    return "\n".join(out) + "\n"


def export_graph(graph: FockGraph, path, highlight: Mapping[int, int] | None = None, format: str = "dot") -> Path:
    """Write the graph as DOT, GraphML or JSON; ``highlight`` marks cage amplitudes."""
    amp = _highlight_values(graph, highlight)
    if format == "dot":
        text = _dot(graph, amp)
    elif format == "graphml":
        text = _graphml(graph, amp)
    elif format == "json":
        d = to_json_dict(graph)
        if highlight is not None:
            d["highlight"] = amp
        text = json.dumps(d, indent=1) + "\n"
    else:
        raise ModelError(f"unknown graph format {format!r}")
    path = Path(path)
    path.write_text(text)
    return path
