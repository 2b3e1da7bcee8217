"""Hypergraph networks built from clique-side and line-side convolutions.

The main architecture runs a GNN stack on node signals using the
clique-expansion shift operator, max-pools node features onto hyperedges
through the incidence structure, runs a second stack on the line-graph
shift operator, and reads out a fixed selection of candidate hyperedges.
Single-representation baselines (clique-only, line-only, hgnn) share the
same pooling so every model emits hyperedge logits.

The transfer certificate for r representations with depths L_i, widths f_i
and similarity coefficients eps_i is sum_i C L_i eps_i prod_j f_j^{L_j}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .gnn import (
    GnnModel,
    backward_batch,
    forward_batch,
    model_from_dict,
    model_to_dict,
    CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
)
from .hypergraph import Hypergraph, gso, incidence

ARCHITECTURES = ("henn", "clique", "line", "hgnn")


class MaxPool:
    """Max over index groups along the leading axis, with exact gradients.

    Groups hold sorted input indices; ties route the gradient to the first
    (lowest-index) member, which keeps runs reproducible.
    """

    def __init__(self, groups: Sequence[Sequence[int]], in_size: int):
        if any(len(g) == 0 for g in groups):
            raise ConfigError("pooling groups must be nonempty")
        self.in_size = in_size
        self.out_size = len(groups)
        sizes = np.array([len(g) for g in groups])
        self.flat = np.concatenate([np.asarray(g, dtype=int) for g in groups])
        self.starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        self.segments = np.repeat(np.arange(self.out_size), sizes)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(x[self.flat], self.starts, axis=0)

    def forward_with_argmax(self, x: np.ndarray):
        gathered = x[self.flat]
        out = np.maximum.reduceat(gathered, self.starts, axis=0)
        slots = np.arange(self.flat.size).reshape((-1,) + (1,) * (x.ndim - 1))
        pos = np.where(gathered == out[self.segments], slots, self.flat.size)
        first = np.minimum.reduceat(pos, self.starts, axis=0)
        return out, first

    def backward(self, first: np.ndarray, dout: np.ndarray, x_shape) -> np.ndarray:
        dx = np.zeros(x_shape)
        nodes = self.flat[first]
        idx = np.indices(first.shape)[1:]
        np.add.at(dx, (nodes, *idx), dout)
        return dx


def _groups_from_incidence(b: np.ndarray, axis: int):
    b = np.asarray(b)
    if axis == 0:  # node -> edge: group j holds the nodes of hyperedge j
        return [np.flatnonzero(b[:, j]) for j in range(b.shape[1])]
    return [np.flatnonzero(b[i, :]) for i in range(b.shape[0])]


def pool_node_to_edge(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hyperedge signal: out[j, c] = max over member nodes i of x[i, c]."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.shape[0] != b.shape[0]:
        raise ConfigError(f"signal has {x.shape[0]} rows, incidence has {b.shape[0]}")
    out = MaxPool(_groups_from_incidence(b, 0), b.shape[0]).forward(x)
    return out[:, 0] if squeeze else out


def pool_edge_to_node(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Node signal: out[i, c] = max over incident hyperedges j of x[j, c]."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.shape[0] != b.shape[1]:
        raise ConfigError(f"signal has {x.shape[0]} rows, incidence has {b.shape[1]} columns")
    out = MaxPool(_groups_from_incidence(b, 1), b.shape[1]).forward(x)
    return out[:, 0] if squeeze else out


@dataclass(eq=False)
class HennModel:
    """Clique-side stack, incidence pooling, line-side stack, fixed readout."""

    node_stack: GnnModel
    edge_stack: GnnModel
    candidates: np.ndarray = None

    def __post_init__(self):
        if self.node_stack.feature_counts[-1] != self.edge_stack.feature_counts[0]:
            raise ConfigError(
                "node stack output width must match edge stack input width"
            )
        if self.candidates is not None:
            self.candidates = np.asarray(self.candidates, dtype=int)

    def stacks(self):
        return (self.node_stack, self.edge_stack)


def henn_forward(model: HennModel, h: Hypergraph, x0: np.ndarray) -> np.ndarray:
    """Full forward pass from node signals to hyperedge signals.

    Builds the two shift operators from the hypergraph; for repeated
    evaluation use :class:`SourceLocalizer`, which caches them.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    b = incidence(h)
    s_c = gso(h, "clique-henn")
    s_l = gso(h, "line-henn")
    y = forward_batch(model.node_stack, s_c, x0[:, None, :])
    pooled = MaxPool(_groups_from_incidence(b, 0), h.n).forward(y)
    out = forward_batch(model.edge_stack, s_l, pooled)
    return out[:, 0, :]


def multi_representation_bound(
    depths: Sequence[int],
    widths: Sequence[int],
    epsilons: Sequence[float],
    c: float,
) -> float:
    """sum_i C L_i eps_i prod_j f_j^{L_j} over r graph representations."""
    depths = [int(v) for v in depths]
    widths = [int(v) for v in widths]
    epsilons = [float(v) for v in epsilons]
    if not len(depths) == len(widths) == len(epsilons):
        raise ConfigError("depths, widths and epsilons must have equal length")
    width_product = float(np.prod([f**l for f, l in zip(widths, depths)]))
    return sum(c * l * e * width_product for l, e in zip(depths, epsilons))


def henn_transfer_bound(
    model: HennModel, eps_clique: float, eps_line: float, c: float
) -> float:
    depths = [stack.depth for stack in model.stacks()]
    widths = [max(stack.feature_counts) for stack in model.stacks()]
    return multi_representation_bound(depths, widths, [eps_clique, eps_line], c)


class LocalizerContext:
    """Cached operators and pooling structure for one hypergraph."""

    def __init__(self, h: Hypergraph):
        self.hypergraph = h
        self.incidence = incidence(h)
        self.clique_gso = gso(h, "clique-henn")
        self.line_gso = gso(h, "line-henn")
        self.hgnn_gso = gso(h, "hgnn")
        self.node_to_edge = MaxPool(_groups_from_incidence(self.incidence, 0), h.n)


@dataclass(eq=False)
class SourceLocalizer:
    """A trainable hyperedge classifier in one of four architectures.

    henn    node stack on the clique GSO, pool, edge stack on the line GSO
    clique  node stack on the clique GSO, pool
    line    pool the input first, edge stack on the line GSO
    hgnn    node stack on the hgnn GSO, pool

    The final stack must end in a single feature; logits are the values on
    the fixed candidate hyperedges.
    """

    architecture: str
    candidates: np.ndarray
    node_stack: GnnModel = None
    edge_stack: GnnModel = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        self.candidates = np.asarray(self.candidates, dtype=int)
        needs_node = self.architecture in ("henn", "clique", "hgnn")
        needs_edge = self.architecture in ("henn", "line")
        if needs_node and self.node_stack is None:
            raise ConfigError(f"{self.architecture} needs a node stack")
        if needs_edge and self.edge_stack is None:
            raise ConfigError(f"{self.architecture} needs an edge stack")
        final = self.edge_stack if needs_edge else self.node_stack
        if final.feature_counts[-1] != 1:
            raise ConfigError("final stack must emit a single feature")

    def stacks(self):
        out = []
        if self.node_stack is not None:
            out.append(("node", self.node_stack))
        if self.edge_stack is not None:
            out.append(("edge", self.edge_stack))
        return out

    def parameters(self):
        return [h for _, stack in self.stacks() for h in stack.layers]

    def set_parameters(self, params):
        flat = list(params)
        offset = 0
        for _, stack in self.stacks():
            for i in range(stack.depth):
                stack.layers[i] = flat[offset]
                offset += 1

    def forward_full(self, ctx: LocalizerContext, x: np.ndarray):
        """Batched logits plus the caches needed for the backward pass.

        ``x`` has layout (n, batch, f_in); returns (logits (batch, 10), state).
        """
        state = {"node_cache": None, "edge_cache": None, "argmax": None, "x_shape": None}
        if self.architecture == "henn":
            state["node_cache"] = []
            y = forward_batch(self.node_stack, ctx.clique_gso, x, state["node_cache"])
            state["x_shape"] = y.shape
            pooled, amax = ctx.node_to_edge.forward_with_argmax(y)
            state["argmax"] = amax
            state["edge_cache"] = []
            out = forward_batch(self.edge_stack, ctx.line_gso, pooled, state["edge_cache"])
        elif self.architecture == "line":
            pooled, amax = ctx.node_to_edge.forward_with_argmax(x)
            state["argmax"] = amax
            state["x_shape"] = x.shape
            state["edge_cache"] = []
            out = forward_batch(self.edge_stack, ctx.line_gso, pooled, state["edge_cache"])
        else:
            op = ctx.clique_gso if self.architecture == "clique" else ctx.hgnn_gso
            state["node_cache"] = []
            y = forward_batch(self.node_stack, op, x, state["node_cache"])
            state["x_shape"] = y.shape
            pooled, amax = ctx.node_to_edge.forward_with_argmax(y)
            state["argmax"] = amax
            out = pooled
        logits = out[self.candidates, :, 0].T
        state["out_shape"] = out.shape
        return logits, state

    def backward_full(self, ctx: LocalizerContext, state: dict, dlogits: np.ndarray):
        """Gradients for every stack parameter given d(loss)/d(logits)."""
        dout = np.zeros(state["out_shape"])
        dout[self.candidates, :, 0] = dlogits.T
        grads = {}
        if self.architecture == "henn":
            edge_grads, dpooled = backward_batch(
                self.edge_stack, ctx.line_gso, state["edge_cache"], dout
            )
            grads["edge"] = edge_grads
            dy = ctx.node_to_edge.backward(state["argmax"], dpooled, state["x_shape"])
            node_grads, _ = backward_batch(
                self.node_stack, ctx.clique_gso, state["node_cache"], dy
            )
            grads["node"] = node_grads
        elif self.architecture == "line":
            edge_grads, _ = backward_batch(
                self.edge_stack, ctx.line_gso, state["edge_cache"], dout
            )
            grads["edge"] = edge_grads
        else:
            op = ctx.clique_gso if self.architecture == "clique" else ctx.hgnn_gso
            dy = ctx.node_to_edge.backward(state["argmax"], dout, state["x_shape"])
            node_grads, _ = backward_batch(self.node_stack, op, state["node_cache"], dy)
            grads["node"] = node_grads
        return [g for name, _ in self.stacks() for g in grads[name]]

    def logits(self, ctx: LocalizerContext, signals: np.ndarray) -> np.ndarray:
        """Candidate logits for signals laid out as (batch, n)."""
        x = np.ascontiguousarray(np.asarray(signals, dtype=float).T)[:, :, None]
        out, _ = self.forward_full(ctx, x)
        return out

    def operators(self, ctx: LocalizerContext):
        """The shift operators this architecture convolves with."""
        if self.architecture == "henn":
            return {"node": ctx.clique_gso, "edge": ctx.line_gso}
        if self.architecture == "clique":
            return {"node": ctx.clique_gso}
        if self.architecture == "line":
            return {"edge": ctx.line_gso}
        return {"node": ctx.hgnn_gso}


def baseline_forward(
    kind: str, h: Hypergraph, model: GnnModel, x0: np.ndarray
) -> np.ndarray:
    """Hyperedge logits for a single-representation baseline.

    clique and hgnn run the stack on node signals and pool the output;
    line pools the input and runs the stack on hyperedge signals.
    """
    if kind not in ("clique", "line", "hgnn"):
        raise ConfigError(f"unknown baseline kind {kind!r}")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    b = incidence(h)
    if kind == "line":
        pooled = pool_node_to_edge(x0, b)
        out = forward_batch(model, gso(h, "line-henn"), pooled[:, None, :])
        return out[:, 0, :]
    op = gso(h, "clique-henn" if kind == "clique" else "hgnn")
    y = forward_batch(model, op, x0[:, None, :])
    return pool_node_to_edge(y[:, 0, :], b)


def localizer_to_dict(model: SourceLocalizer) -> dict:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "type": "source-localizer",
        "architecture": model.architecture,
        "candidates": model.candidates.tolist(),
        "junctions": [name for name, _ in model.stacks()],
    }
    for name, stack in model.stacks():
        payload[f"{name}_stack"] = model_to_dict(stack)
    return payload


def localizer_from_dict(payload: dict) -> SourceLocalizer:
    if payload.get("type") != "source-localizer":
        raise ConfigError("not a source-localizer checkpoint")
    return SourceLocalizer(
        architecture=payload["architecture"],
        candidates=np.asarray(payload["candidates"], dtype=int),
        node_stack=model_from_dict(payload["node_stack"]) if "node_stack" in payload else None,
        edge_stack=model_from_dict(payload["edge_stack"]) if "edge_stack" in payload else None,
    )
