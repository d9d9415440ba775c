"""Agent communication graphs and their Laplacians.

The graph fixes two things at once: which agents exchange iterates, and
which receiver pairs contribute cross-correlation measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np


class GraphError(ValueError):
    """Raised for malformed or disconnected agent graphs."""


@dataclass(frozen=True, eq=False)
class AgentGraph:
    """Undirected simple graph on agents ``0 .. num_agents-1``.

    Edges are stored once as ``(i, j)`` with ``i < j``, sorted
    lexicographically.
    """

    num_agents: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.num_agents < 1:
            raise GraphError("graph needs at least one vertex")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loops are not allowed")
        if e.size and (e.min() < 0 or e.max() >= self.num_agents):
            raise GraphError("edge endpoint out of range")
        e = np.sort(e, axis=1)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise GraphError("duplicate edges")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_agents, self.num_agents))
        adj[self.edges[:, 0], self.edges[:, 1]] = 1.0
        adj[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return adj

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    @cached_property
    def laplacian(self) -> np.ndarray:
        lap = np.diag(self.adjacency.sum(axis=1)) - self.adjacency
        lap.setflags(write=False)
        return lap

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.adjacency]

    @cached_property
    def algebraic_connectivity(self) -> float:
        if self.num_agents == 1:
            return 0.0
        return float(np.linalg.eigvalsh(self.laplacian)[1])

    @property
    def is_connected(self) -> bool:
        if self.num_agents == 1:
            return False
        return nx.is_connected(self.to_networkx())

    def require_connected(self):
        if self.num_edges == 0:
            raise GraphError("graph has no edges")
        if not self.is_connected:
            raise GraphError("graph is not connected")

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.num_agents))
        g.add_edges_from(map(tuple, self.edges.tolist()))
        return g

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> AgentGraph:
        nodes = sorted(g.nodes)
        if nodes != list(range(len(nodes))):
            g = nx.convert_node_labels_to_integers(g, ordering="sorted")
        return cls(g.number_of_nodes(), np.array(list(g.edges), dtype=np.int64).reshape(-1, 2))

    def save_edgelist(self, path):
        lines = [f"# agents {self.num_agents}"]
        lines += [f"{i} {j}" for i, j in self.edges.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_edgelist(cls, path) -> AgentGraph:
        num_agents = None
        pairs = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "agents":
                    num_agents = int(parts[1])
                continue
            i, j = line.split()
            pairs.append((int(i), int(j)))
        edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        if num_agents is None:
            num_agents = int(edges.max()) + 1 if len(edges) else 1
        return cls(num_agents, edges)


def complete_graph(num_agents: int) -> AgentGraph:
    if num_agents < 2:
        raise GraphError("complete graph needs at least two agents")
    i, j = np.triu_indices(num_agents, k=1)
    return AgentGraph(num_agents, np.stack([i, j], axis=1))


def small_world(num_agents, connection_prob, base_degree=4, rng_seed=None, max_retries=100):
    """Watts-Strogatz graph, resampled until connected.

    A ring lattice where every vertex links to its ``base_degree`` nearest
    neighbours; each lattice edge is then rewired with probability
    ``connection_prob``. When ``base_degree >= num_agents - 1`` the lattice is
    already complete and the complete graph is returned.
    """
    if num_agents < 2:
        raise GraphError("small-world graph needs at least two agents")
    if not 0.0 <= connection_prob <= 1.0:
        raise GraphError("connection_prob must lie in [0, 1]")
    if base_degree < 2 or base_degree % 2:
        raise GraphError("base_degree must be a positive even number")
    if base_degree >= num_agents - 1:
        return complete_graph(num_agents)

    rng = np.random.default_rng(rng_seed)
    for _ in range(max_retries):
        seed = int(rng.integers(2**32))
        g = nx.watts_strogatz_graph(num_agents, base_degree, connection_prob, seed=seed)
        if nx.is_connected(g):
            return AgentGraph.from_networkx(g)
    raise GraphError(f"no connected small-world sample after {max_retries} retries")


def _as_blocks(graph: AgentGraph, x):
    x = np.asarray(x)
    if x.size % graph.num_agents or x.ndim not in (1, 2):
        raise GraphError(f"cannot split array of shape {x.shape} into {graph.num_agents} blocks")
    if x.ndim == 2 and x.shape[0] != graph.num_agents:
        raise GraphError(f"expected {graph.num_agents} rows, got {x.shape[0]}")
    return x.reshape(graph.num_agents, -1)


def laplacian_apply(graph: AgentGraph, x):
    """Apply ``L kron I_K`` blockwise; ``x`` is stacked ``(N*K,)`` or ``(N, K)``."""
    blocks = _as_blocks(graph, x)
    return (graph.laplacian @ blocks).reshape(np.shape(x))


def laplacian_quadratic(graph: AgentGraph, x) -> float:
    """``x^H (L kron I_K) x``, computed as the sum of squared edge differences."""
    blocks = _as_blocks(graph, x)
    if graph.num_edges == 0:
        return 0.0
    diff = blocks[graph.edges[:, 0]] - blocks[graph.edges[:, 1]]
    return float(np.sum(diff.real**2 + diff.imag**2))
