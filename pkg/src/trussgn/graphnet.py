"""Graph-network computational blocks with reverse-mode gradients.

A block updates every edge, then every node, then the global attribute:

    e'_k = phi_e(e_k, v_{s_k}, v_{r_k}, u)
    v'_i = phi_v(rho(e' -> i), v_i, u)
    u'   = phi_u(rho(e'), rho(v'), u)

Each ``phi`` is a small ReLU perceptron and ``rho`` is an order-free
aggregation (mean, or mean concatenated with population variance). Which
arguments each network sees is configurable per block. Forward passes use
kernels with a fixed summation order, so a prediction is a deterministic
function of its own graph: permuting nodes, shuffling edges or changing the
batch it is evaluated in leaves it bit-for-bit unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._kernels import dense_forward, segment_sorted_sum
from .exceptions import StaleTapeError, ValidationError, WidthMismatchError
from .graph import AttributedGraph

AGGREGATIONS = ("mean", "mean_and_variance")
EDGE_SOURCES = ("edge", "sender", "receiver", "global")
NODE_SOURCES = ("agg_edges", "node", "global")
GLOBAL_SOURCES = ("agg_edges", "agg_nodes", "global")


def normalize_aggregation(kind: str) -> str:
    aliases = {"mean": "mean", "meanvar": "mean_and_variance", "mean_and_variance": "mean_and_variance"}
    try:
        return aliases[kind]
    except KeyError:
        raise ValidationError(f"unknown aggregation {kind!r}") from None


def aggregation_factor(kind: str) -> int:
    return 2 if normalize_aggregation(kind) == "mean_and_variance" else 1


# --------------------------------------------------------------------------
# aggregation

class Segments:
    """Assignment of rows to segments, in CSR form for the sorted-sum kernel."""

    def __init__(self, owner: np.ndarray, n_segments: int):
        self.owner = np.asarray(owner, dtype=np.int64)
        self.n_segments = int(n_segments)
        counts = np.bincount(self.owner, minlength=self.n_segments)
        self.counts = counts.astype(float)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.members = np.argsort(self.owner, kind="stable").astype(np.int64)
        self.inv_counts = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)


def _segment_sum(values: np.ndarray, seg: Segments) -> np.ndarray:
    if values.shape[1] == 0:
        return np.zeros((seg.n_segments, 0))
    return segment_sorted_sum(np.ascontiguousarray(values), seg.indptr, seg.members)


def segment_aggregate(values: np.ndarray, seg: Segments, kind: str):
    """Aggregate rows per segment. Returns ``(result, cache)``.

    Empty segments yield zeros; the variance is the population variance.
    """
    kind = normalize_aggregation(kind)
    mean = _segment_sum(values, seg) * seg.inv_counts[:, None]
    if kind == "mean":
        return mean, (kind, None)
    dev = values - mean[seg.owner]
    var = _segment_sum(dev * dev, seg) * seg.inv_counts[:, None]
    return np.concatenate([mean, var], axis=1), (kind, dev)


def segment_aggregate_backward(grad: np.ndarray, seg: Segments, cache) -> np.ndarray:
    kind, dev = cache
    inv = seg.inv_counts[seg.owner][:, None]
    if kind == "mean":
        return grad[seg.owner] * inv
    w = dev.shape[1]
    g_mean, g_var = grad[:, :w], grad[:, w:]
    # the variance's dependence on the mean cancels since sum(dev) == 0
    return (g_mean[seg.owner] + 2.0 * dev * g_var[seg.owner]) * inv


def aggregate(vectors, kind: str = "mean", width: Optional[int] = None) -> np.ndarray:
    """Aggregate a set of equal-width vectors into one vector.

    An empty set needs ``width`` and yields the zero vector.
    """
    rows = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
    if not rows:
        if width is None:
            raise ValidationError("width is required to aggregate an empty set")
        return np.zeros(width * aggregation_factor(kind))
    if len({r.shape[0] for r in rows}) != 1:
        raise ValidationError("vectors to aggregate must share one width")
    values = np.stack(rows)
    seg = Segments(np.zeros(len(rows), dtype=np.int64), 1)
    return segment_aggregate(values, seg, kind)[0][0]


# --------------------------------------------------------------------------
# perceptrons

@dataclass(eq=False)
class Mlp:
    """Fully connected network; ReLU on hidden layers, optional ReLU on the output."""

    widths: tuple
    weights: list
    biases: list
    output_relu: bool = True

    @classmethod
    def init(cls, widths: Sequence[int], rng: np.random.Generator, output_relu: bool = True) -> "Mlp":
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValidationError(f"invalid layer widths {widths}")
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(widths, weights, biases, output_relu)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray):
        if x.shape[1] != self.widths[0]:
            raise WidthMismatchError(f"network expects input width {self.widths[0]}, got {x.shape[1]}")
        inputs, masks = [], []
        h = np.ascontiguousarray(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = dense_forward(h, w, b)
            if i < last or self.output_relu:
                mask = z > 0
                h = np.where(mask, z, 0.0)
            else:
                mask = None
                h = z
            masks.append(mask)
        return h, (inputs, masks)

    def backward(self, cache, grad: np.ndarray):
        """Return ``(input gradient, [dW0, db0, dW1, db1, ...])``."""
        inputs, masks = cache
        grads = [None] * (2 * len(self.weights))
        g = grad
        for i in range(len(self.weights) - 1, -1, -1):
            if masks[i] is not None:
                g = np.where(masks[i], g, 0.0)
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return g, grads


# --------------------------------------------------------------------------
# block configuration

@dataclass(frozen=True)
class GnBlockConfig:
    """Wiring and layer widths of one computational block.

    ``*_layers`` lists every layer width including the input; ``None``
    marks an absent network and a leading ``None`` entry asks for the input
    width to be inferred from the wiring.
    """

    edge_inputs: tuple = ("edge",)
    node_inputs: tuple = ("node",)
    global_inputs: tuple = ("global",)
    edge_layers: Optional[tuple] = None
    node_layers: Optional[tuple] = None
    global_layers: Optional[tuple] = None
    aggregation: str = "mean"

    def __post_init__(self):
        for name, allowed in (("edge_inputs", EDGE_SOURCES), ("node_inputs", NODE_SOURCES),
                              ("global_inputs", GLOBAL_SOURCES)):
            chosen = tuple(getattr(self, name))
            unknown = set(chosen) - set(allowed)
            if unknown:
                raise ValidationError(f"{name}: unknown sources {sorted(unknown)}")
            # canonical concatenation order
            object.__setattr__(self, name, tuple(s for s in allowed if s in chosen))
        for name in ("edge_layers", "node_layers", "global_layers"):
            layers = getattr(self, name)
            if layers is not None:
                object.__setattr__(self, name, tuple(layers))
        object.__setattr__(self, "aggregation", normalize_aggregation(self.aggregation))
        if self.edge_layers is None and self.node_layers is None and self.global_layers is None:
            raise ValidationError("a block needs at least one update network")

    @property
    def has_edge(self) -> bool:
        return self.edge_layers is not None

    @property
    def has_node(self) -> bool:
        return self.node_layers is not None

    @property
    def has_global(self) -> bool:
        return self.global_layers is not None

    def input_widths(self, widths: tuple) -> dict:
        """Input width each present network receives given incoming ``(de, dv, du)``."""
        de, dv, du = widths
        f = aggregation_factor(self.aggregation)
        out = {}
        if self.has_edge:
            sizes = {"edge": de, "sender": dv, "receiver": dv, "global": du}
            out["edge"] = sum(sizes[s] for s in self.edge_inputs)
        de2 = self.edge_layers[-1] if self.has_edge else de
        if self.has_node:
            sizes = {"agg_edges": f * de2, "node": dv, "global": du}
            out["node"] = sum(sizes[s] for s in self.node_inputs)
        dv2 = self.node_layers[-1] if self.has_node else dv
        if self.has_global:
            sizes = {"agg_edges": f * de2, "agg_nodes": f * dv2, "global": du}
            out["global"] = sum(sizes[s] for s in self.global_inputs)
        return out

    def output_widths(self, widths: tuple) -> tuple:
        de, dv, du = widths
        return (self.edge_layers[-1] if self.has_edge else de,
                self.node_layers[-1] if self.has_node else dv,
                self.global_layers[-1] if self.has_global else du)

    def resolved(self, widths: tuple) -> "GnBlockConfig":
        """Copy with inferred input widths filled in; raises on declared mismatches."""
        inferred = self.input_widths(widths)
        changes = {}
        for key in ("edge", "node", "global"):
            layers = getattr(self, f"{key}_layers")
            if layers is None:
                continue
            if layers[0] is None:
                changes[f"{key}_layers"] = (inferred[key],) + tuple(layers[1:])
            elif layers[0] != inferred[key]:
                raise WidthMismatchError(
                    f"{key} network declares input width {layers[0]} but the wiring "
                    f"{getattr(self, f'{key}_inputs')} with {self.aggregation} aggregation supplies {inferred[key]}")
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "edge": None if not self.has_edge else {"inputs": list(self.edge_inputs), "layers": list(self.edge_layers)},
            "node": None if not self.has_node else {"inputs": list(self.node_inputs), "layers": list(self.node_layers)},
            "global": None if not self.has_global else {"inputs": list(self.global_inputs), "layers": list(self.global_layers)},
            "aggregation": self.aggregation,
        }

    @classmethod
    def from_dict(cls, d: dict, aggregation: Optional[str] = None) -> "GnBlockConfig":
        kwargs = {"aggregation": aggregation or d.get("aggregation", "mean")}
        for key in ("edge", "node", "global"):
            net = d.get(key)
            if net is not None:
                kwargs[f"{key}_inputs"] = tuple(net.get("inputs", ()))
                kwargs[f"{key}_layers"] = tuple(net["layers"])
        return cls(**kwargs)


def infer_widths(blocks: Sequence[GnBlockConfig], widths: tuple) -> list:
    """Per-block network input widths, as a list of dicts, for incoming graph widths."""
    out = []
    for block in blocks:
        out.append(block.input_widths(widths))
        widths = block.output_widths(widths)
    return out


# --------------------------------------------------------------------------
# batched graphs

@dataclass(eq=False)
class GraphBatch:
    """Disjoint union of graphs with precomputed aggregation segments."""

    nodes: np.ndarray
    edges: np.ndarray
    globals_: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    node_graph: np.ndarray
    edge_graph: np.ndarray
    by_receiver: Segments = field(repr=False)
    edges_by_graph: Segments = field(repr=False)
    nodes_by_graph: Segments = field(repr=False)

    @property
    def n_graphs(self) -> int:
        return self.globals_.shape[0]

    @classmethod
    def from_graphs(cls, graphs: Sequence[AttributedGraph]) -> "GraphBatch":
        if not graphs:
            raise ValidationError("cannot batch zero graphs")
        widths = {g.widths for g in graphs}
        if len(widths) != 1:
            raise WidthMismatchError(f"graphs in a batch must share attribute widths, got {sorted(widths)}")
        n_nodes = np.array([g.n_nodes for g in graphs])
        n_edges = np.array([g.n_edges for g in graphs])
        offsets = np.concatenate([[0], np.cumsum(n_nodes)[:-1]])
        edge_offsets = np.repeat(offsets, n_edges)
        senders = np.concatenate([g.senders for g in graphs]) + edge_offsets
        receivers = np.concatenate([g.receivers for g in graphs]) + edge_offsets
        node_graph = np.repeat(np.arange(len(graphs)), n_nodes)
        edge_graph = np.repeat(np.arange(len(graphs)), n_edges)
        n_total = int(n_nodes.sum())
        return cls(
            nodes=np.concatenate([g.nodes for g in graphs]),
            edges=np.concatenate([g.edges for g in graphs]),
            globals_=np.stack([g.globals_ for g in graphs]),
            senders=senders,
            receivers=receivers,
            node_graph=node_graph,
            edge_graph=edge_graph,
            by_receiver=Segments(receivers, n_total),
            edges_by_graph=Segments(edge_graph, len(graphs)),
            nodes_by_graph=Segments(node_graph, len(graphs)),
        )


# --------------------------------------------------------------------------
# blocks

@dataclass(eq=False)
class GnBlock:
    config: GnBlockConfig
    edge_net: Optional[Mlp] = None
    node_net: Optional[Mlp] = None
    global_net: Optional[Mlp] = None

    @classmethod
    def init(cls, config: GnBlockConfig, rng: np.random.Generator, final: bool = False) -> "GnBlock":
        def make(layers, last=False):
            return None if layers is None else Mlp.init(layers, rng, output_relu=not last)
        return cls(config, make(config.edge_layers), make(config.node_layers),
                   make(config.global_layers, last=final))

    def networks(self) -> list:
        return [net for net in (self.edge_net, self.node_net, self.global_net) if net is not None]

    def parameters(self) -> list:
        out = []
        for net in self.networks():
            out += net.parameters()
        return out

    def forward(self, batch: GraphBatch, e: np.ndarray, v: np.ndarray, u: np.ndarray):
        cfg = self.config
        cache = {"shapes": (e.shape[1], v.shape[1], u.shape[1])}
        if self.edge_net is not None:
            parts = {"edge": e, "sender": v[batch.senders], "receiver": v[batch.receivers],
                     "global": u[batch.edge_graph]}
            x = np.concatenate([parts[s] for s in cfg.edge_inputs], axis=1)
            e2, cache["edge"] = self.edge_net.forward(x)
        else:
            e2 = e
        if self.node_net is not None:
            parts = {"node": v, "global": u[batch.node_graph]}
            if "agg_edges" in cfg.node_inputs:
                parts["agg_edges"], cache["agg_ev"] = segment_aggregate(e2, batch.by_receiver, cfg.aggregation)
            x = np.concatenate([parts[s] for s in cfg.node_inputs], axis=1)
            v2, cache["node"] = self.node_net.forward(x)
        else:
            v2 = v
        if self.global_net is not None:
            parts = {"global": u}
            if "agg_edges" in cfg.global_inputs:
                parts["agg_edges"], cache["agg_eu"] = segment_aggregate(e2, batch.edges_by_graph, cfg.aggregation)
            if "agg_nodes" in cfg.global_inputs:
                parts["agg_nodes"], cache["agg_vu"] = segment_aggregate(v2, batch.nodes_by_graph, cfg.aggregation)
            x = np.concatenate([parts[s] for s in cfg.global_inputs], axis=1)
            u2, cache["global"] = self.global_net.forward(x)
        else:
            u2 = u
        return e2, v2, u2, cache

    def backward(self, batch: GraphBatch, cache, ge2, gv2, gu2):
        """Gradients w.r.t. the block inputs and parameters (in ``parameters()`` order)."""
        cfg = self.config
        de, dv, du = cache["shapes"]
        f = aggregation_factor(cfg.aggregation)
        ge = np.zeros((batch.edges.shape[0], de))
        gv = np.zeros((batch.nodes.shape[0], dv))
        gu = np.zeros((batch.n_graphs, du))
        ge2 = ge2.copy()
        gv2 = gv2.copy()
        grads_global = grads_node = grads_edge = []

        if self.global_net is not None:
            gx, grads_global = self.global_net.backward(cache["global"], gu2)
            sizes = {"agg_edges": f * ge2.shape[1], "agg_nodes": f * gv2.shape[1], "global": du}
            pieces = _split(gx, [sizes[s] for s in cfg.global_inputs])
            for src, g in zip(cfg.global_inputs, pieces):
                if src == "global":
                    gu += g
                elif src == "agg_edges":
                    ge2 += segment_aggregate_backward(g, batch.edges_by_graph, cache["agg_eu"])
                else:
                    gv2 += segment_aggregate_backward(g, batch.nodes_by_graph, cache["agg_vu"])
        else:
            gu += gu2

        if self.node_net is not None:
            gx, grads_node = self.node_net.backward(cache["node"], gv2)
            sizes = {"agg_edges": f * ge2.shape[1], "node": dv, "global": du}
            pieces = _split(gx, [sizes[s] for s in cfg.node_inputs])
            for src, g in zip(cfg.node_inputs, pieces):
                if src == "node":
                    gv += g
                elif src == "global":
                    gu += _segment_total(g, batch.node_graph, batch.n_graphs)
                else:
                    ge2 += segment_aggregate_backward(g, batch.by_receiver, cache["agg_ev"])
        else:
            gv += gv2

        if self.edge_net is not None:
            gx, grads_edge = self.edge_net.backward(cache["edge"], ge2)
            sizes = {"edge": de, "sender": dv, "receiver": dv, "global": du}
            pieces = _split(gx, [sizes[s] for s in cfg.edge_inputs])
            for src, g in zip(cfg.edge_inputs, pieces):
                if src == "edge":
                    ge += g
                elif src == "sender":
                    np.add.at(gv, batch.senders, g)
                elif src == "receiver":
                    np.add.at(gv, batch.receivers, g)
                else:
                    gu += _segment_total(g, batch.edge_graph, batch.n_graphs)
        else:
            ge += ge2

        return ge, gv, gu, list(grads_edge) + list(grads_node) + list(grads_global)


def _split(x: np.ndarray, sizes: Sequence[int]) -> list:
    bounds = np.cumsum([0] + list(sizes))
    return [x[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _segment_total(values: np.ndarray, owner: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, values.shape[1]))
    np.add.at(out, owner, values)
    return out


# --------------------------------------------------------------------------
# model

@dataclass(eq=False)
class Standardizer:
    """Per-channel affine input and target scaling fitted on training data."""

    node_mean: np.ndarray
    node_scale: np.ndarray
    edge_mean: np.ndarray
    edge_scale: np.ndarray
    global_mean: np.ndarray
    global_scale: np.ndarray
    target_mean: float = 0.0
    target_scale: float = 1.0

    @classmethod
    def identity(cls, widths: tuple) -> "Standardizer":
        de, dv, du = widths
        return cls(np.zeros(dv), np.ones(dv), np.zeros(de), np.ones(de), np.zeros(du), np.ones(du))

    @classmethod
    def fit(cls, graphs: Sequence[AttributedGraph], targets=None,
            node_channels=(0, 1), edge_channels=(0,), global_channels=None) -> "Standardizer":
        """Z-score the coordinate, length and temperature channels and the target."""
        widths = graphs[0].widths
        std = cls.identity(widths)
        nodes = np.concatenate([g.nodes for g in graphs])
        edges = np.concatenate([g.edges for g in graphs])
        glob = np.stack([g.globals_ for g in graphs])
        if global_channels is None:
            global_channels = tuple(range(widths[2]))

        def fit_channels(values, mean, scale, channels):
            for c in channels:
                if c < values.shape[1]:
                    mean[c] = values[:, c].mean()
                    sd = values[:, c].std()
                    scale[c] = sd if sd > 0 else 1.0

        fit_channels(nodes, std.node_mean, std.node_scale, node_channels)
        fit_channels(edges, std.edge_mean, std.edge_scale, edge_channels)
        fit_channels(glob, std.global_mean, std.global_scale, global_channels)
        if targets is not None:
            y = np.asarray(targets, dtype=float)
            std.target_mean = float(y.mean())
            sd = float(y.std())
            std.target_scale = sd if sd > 0 else 1.0
        return std

    def transform_batch(self, batch: GraphBatch):
        return ((batch.edges - self.edge_mean) / self.edge_scale,
                (batch.nodes - self.node_mean) / self.node_scale,
                (batch.globals_ - self.global_mean) / self.global_scale)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        arrays = {k: np.asarray(v, dtype=float) for k, v in d.items() if isinstance(v, list)}
        return cls(**arrays, target_mean=float(d["target_mean"]), target_scale=float(d["target_scale"]))


@dataclass(eq=False)
class Tape:
    batch: GraphBatch
    caches: list
    states: list
    raw_output: np.ndarray
    version: int


@dataclass(eq=False)
class GnModel:
    """Ordered computational blocks mapping an attributed graph to a scalar.

    The prediction is the single component of the final global attribute,
    mapped back to target units by the stored standardizer.
    """

    blocks: list
    input_widths: tuple
    standardizer: Standardizer
    case: Optional[int] = None
    version: int = 0

    @classmethod
    def build(cls, block_configs: Sequence[GnBlockConfig], input_widths: tuple,
              rng=None, standardizer: Optional[Standardizer] = None, case: Optional[int] = None) -> "GnModel":
        """Resolve widths against ``input_widths`` and initialise weights."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        if not block_configs:
            raise ValidationError("a model needs at least one block")
        widths = tuple(input_widths)
        resolved = []
        for i, cfg in enumerate(block_configs):
            try:
                cfg = cfg.resolved(widths)
            except WidthMismatchError as exc:
                raise WidthMismatchError(f"block {i + 1}: {exc}") from None
            resolved.append(cfg)
            widths = cfg.output_widths(widths)
        last = resolved[-1]
        if not last.has_global or last.global_layers[-1] != 1:
            raise ValidationError("the final block needs a global network with output width 1")
        blocks = [GnBlock.init(cfg, rng, final=(i == len(resolved) - 1)) for i, cfg in enumerate(resolved)]
        std = standardizer or Standardizer.identity(tuple(input_widths))
        return cls(blocks, tuple(input_widths), std, case)

    @property
    def configs(self) -> list:
        return [b.config for b in self.blocks]

    def parameters(self) -> list:
        out = []
        for b in self.blocks:
            out += b.parameters()
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def set_parameters(self, values: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValidationError("parameter list length mismatch")
        for p, v in zip(params, values):
            p[...] = v
        self.version += 1

    def get_parameters(self) -> list:
        return [p.copy() for p in self.parameters()]

    def check_graph(self, graph: AttributedGraph) -> None:
        if graph.widths != self.input_widths:
            raise WidthMismatchError(f"graph widths (edge, node, global) = {graph.widths}, "
                                     f"model expects {self.input_widths}")


def block_forward(block: GnBlock, graph: AttributedGraph) -> AttributedGraph:
    """Apply one block to a single graph, returning the updated graph."""
    batch = GraphBatch.from_graphs([graph])
    e2, v2, u2, _ = block.forward(batch, batch.edges, batch.nodes, batch.globals_)
    return graph.replace(nodes=v2, edges=e2, globals_=u2[0])


def _as_batch(model: GnModel, graphs) -> GraphBatch:
    if isinstance(graphs, GraphBatch):
        return graphs
    if isinstance(graphs, AttributedGraph):
        graphs = [graphs]
    for g in graphs:
        model.check_graph(g)
    return GraphBatch.from_graphs(list(graphs))


def model_forward(model: GnModel, graphs):
    """Predict for a graph, a sequence of graphs or a prepared batch.

    Returns ``(predictions, tape)``; predictions are in target units, one
    per graph.
    """
    batch = _as_batch(model, graphs)
    e, v, u = model.standardizer.transform_batch(batch)
    caches, states = [], []
    for i, block in enumerate(model.blocks):
        try:
            e, v, u, cache = block.forward(batch, e, v, u)
        except WidthMismatchError as exc:
            raise WidthMismatchError(f"block {i + 1}: {exc}") from None
        caches.append(cache)
        states.append((e.shape, v.shape, u.shape))
    raw = u[:, 0]
    std = model.standardizer
    pred = std.target_mean + std.target_scale * raw
    return pred, Tape(batch, caches, states, raw, model.version)


def model_backward(model: GnModel, tape: Tape, loss_gradient) -> list:
    """Reverse-mode gradients of ``sum(loss_gradient * prediction)``.

    ``loss_gradient`` is the derivative of the loss w.r.t. each prediction
    (a scalar broadcasts). Returns arrays aligned with ``model.parameters()``.
    """
    if tape.version != model.version:
        raise StaleTapeError("parameters changed since the tape was recorded")
    batch = tape.batch
    g_out = np.broadcast_to(np.asarray(loss_gradient, dtype=float), tape.raw_output.shape)
    g_raw = g_out * model.standardizer.target_scale
    e_shape, v_shape, u_shape = tape.states[-1]
    ge = np.zeros(e_shape)
    gv = np.zeros(v_shape)
    gu = np.zeros(u_shape)
    gu[:, 0] = g_raw
    grads_per_block = []
    for block, cache in zip(reversed(model.blocks), reversed(tape.caches)):
        ge, gv, gu, grads = block.backward(batch, cache, ge, gv, gu)
        grads_per_block.append(grads)
    out = []
    for grads in reversed(grads_per_block):
        out += grads
    return out


def predict(model: GnModel, graphs: Sequence[AttributedGraph], batch_size: int = 256) -> np.ndarray:
    graphs = list(graphs)
    out = np.empty(len(graphs))
    for start in range(0, len(graphs), batch_size):
        chunk = graphs[start:start + batch_size]
        out[start:start + len(chunk)] = model_forward(model, chunk)[0]
    return out
