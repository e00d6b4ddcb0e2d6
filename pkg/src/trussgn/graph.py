"""Attributed graphs and the truss-to-graph encoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .fem import LINEAR_EA, QUADRATIC_EA, Truss, all_member_geometry


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Directed graph with node, edge and global attribute vectors.

    ``nodes`` is ``(n, dv)``, ``edges`` is ``(m, de)``, ``senders`` and
    ``receivers`` are length-``m`` index arrays and ``globals_`` has shape
    ``(du,)`` (``du`` may be zero).
    """

    nodes: np.ndarray
    edges: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    globals_: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        edges = np.asarray(self.edges, dtype=float)
        senders = np.asarray(self.senders, dtype=np.int64).reshape(-1)
        receivers = np.asarray(self.receivers, dtype=np.int64).reshape(-1)
        if edges.ndim == 1:
            edges = edges.reshape(len(senders), -1)
        globals_ = np.asarray(self.globals_, dtype=float).reshape(-1)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "senders", senders)
        object.__setattr__(self, "receivers", receivers)
        object.__setattr__(self, "globals_", globals_)
        n = len(nodes)
        if len(senders) != len(receivers) or len(edges) != len(senders):
            raise ValidationError("senders, receivers and edge attributes must have equal length")
        if len(senders) and (min(senders.min(), receivers.min()) < 0
                             or max(senders.max(), receivers.max()) >= n):
            raise ValidationError("edge endpoint index out of range")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def widths(self) -> tuple[int, int, int]:
        """``(edge, node, global)`` attribute widths."""
        return self.edges.shape[1], self.nodes.shape[1], self.globals_.shape[0]

    def replace(self, **changes) -> "AttributedGraph":
        fields = dict(nodes=self.nodes, edges=self.edges, senders=self.senders,
                      receivers=self.receivers, globals_=self.globals_)
        fields.update(changes)
        return AttributedGraph(**fields)

    def equals(self, other: "AttributedGraph") -> bool:
        """Bitwise equality of topology and attributes."""
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.senders, other.senders)
                and np.array_equal(self.receivers, other.receivers)
                and np.array_equal(self.globals_, other.globals_))


def edge_width(case: int) -> int:
    return 5 if case == 3 else 3


def global_width(case: int) -> int:
    return 0 if case == 1 else 1


def encode_truss(truss: Truss, case: int) -> AttributedGraph:
    """Encode a truss as an attributed graph.

    Node attributes are ``[x, y, fixed_x, fixed_y]``. Each member becomes two
    anti-parallel edges with ``[L, cos, sin]`` measured from sender to
    receiver, plus a one-hot ``[type1, type2]`` in case 3. The global
    attribute is ``[T]`` in cases 2 and 3 and empty in case 1.
    """
    if case not in (1, 2, 3):
        raise ValidationError(f"case must be 1, 2 or 3, got {case}")
    nodes = np.column_stack([truss.coords, truss.fixed.astype(float)])
    length, cos, sin = all_member_geometry(truss)
    i, j = truss.members[:, 0], truss.members[:, 1]
    m = truss.n_members
    # edge 2k is i->j, edge 2k+1 is j->i
    senders = np.empty(2 * m, dtype=np.int64)
    receivers = np.empty(2 * m, dtype=np.int64)
    senders[0::2], senders[1::2] = i, j
    receivers[0::2], receivers[1::2] = j, i
    attrs = np.empty((2 * m, 3))
    attrs[0::2] = np.column_stack([length, cos, sin])
    attrs[1::2] = np.column_stack([length, -cos, -sin])
    if case == 3:
        onehot = np.column_stack([truss.member_types == LINEAR_EA,
                                  truss.member_types == QUADRATIC_EA]).astype(float)
        attrs = np.column_stack([attrs, np.repeat(onehot, 2, axis=0)])
    globals_ = np.array([truss.temperature]) if case in (2, 3) else np.zeros(0)
    return AttributedGraph(nodes, attrs, senders, receivers, globals_)


def permute_graph(graph: AttributedGraph, permutation) -> AttributedGraph:
    """Relabel nodes: old node ``i`` becomes node ``permutation[i]``."""
    perm = np.asarray(permutation, dtype=np.int64)
    n = graph.n_nodes
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError("permutation must be a bijection on node indices")
    nodes = np.empty_like(graph.nodes)
    nodes[perm] = graph.nodes
    return graph.replace(nodes=nodes, senders=perm[graph.senders], receivers=perm[graph.receivers])


def with_temperature(graph: AttributedGraph, temperature: float) -> AttributedGraph:
    """Same graph with the global temperature channel set to ``temperature``."""
    if graph.globals_.shape[0] != 1:
        raise ValidationError("graph carries no temperature channel")
    return graph.replace(globals_=np.array([float(temperature)]))
