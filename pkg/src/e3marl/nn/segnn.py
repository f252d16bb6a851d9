"""Steerable E(3)-equivariant message passing (a compact SEGNN).

Hidden node features are ``cs`` invariant scalars (0e) and ``cv`` vectors (1o),
stored as tensors of shape (n, cs) and (n, 3, cv). Vector channels sit on the
last axis so channel mixing is a plain matmul, which commutes with rotations
acting on axis 1.

Clebsch-Gordan paths used (Y0 = 1, Y1 = unit edge direction):

    0e x 0e -> 0e   scalar weights
    1o x 1o -> 0e   dot products with the edge direction
    0e x 1o -> 1o   scalars times the edge direction
    1o x 0e -> 1o   vector channel mixing
"""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import InvalidArgumentError, SpecError
from ..group import SCALAR, VECTOR, IrrepSpec, SteerableVector
from .graph import EuclideanGraph, GraphBatch, batch_graphs, merge_features
from .module import Module, glorot


def gate(s_pre: Tensor, v: Tensor, num_scalars: int) -> tuple[Tensor, Tensor]:
    """tanh on the first ``num_scalars`` scalars; remaining scalars gate the vectors."""
    cv = v.shape[2]
    if s_pre.shape[1] != num_scalars + cv:
        raise SpecError(f"gate needs {num_scalars} scalars + {cv} gates, got {s_pre.shape[1]}")
    s = ad.tanh(s_pre[:, :num_scalars])
    if cv == 0:
        return s, v
    g = ad.sigmoid(s_pre[:, num_scalars:])
    return s, v * ad.reshape(g, (g.shape[0], 1, cv))


def gated_nonlinearity(v: SteerableVector) -> SteerableVector:
    """Layout ``a x 0e + b x 1o`` with a >= b: the last b scalars are gates.

    Returns ``(a - b) x 0e + b x 1o``.
    """
    spec = v.spec
    blocks = [(m, ir) for m, ir in spec.blocks]
    n_s, n_v = spec.count(SCALAR), spec.count(VECTOR)
    if any(ir not in (SCALAR, VECTOR) for _, ir in blocks):
        raise SpecError(f"gated nonlinearity supports 0e/1o only, got {spec}")
    if n_s < n_v:
        raise SpecError(f"{spec} has {n_v} vector channels but only {n_s} scalars for gates")
    si = spec.channel_indices(SCALAR)[:, 0]
    vi = spec.channel_indices(VECTOR)
    s = Tensor(v.data[si][None])
    vec = Tensor(v.data[vi].T[None]) if n_v else Tensor(np.zeros((1, 3, 0)))
    with ad.no_grad():
        so, vo = gate(s, vec, n_s - n_v)
    out_spec, data = merge_features(so.data, vo.data)
    return SteerableVector(out_spec, data[0])


def _outer_attr(x: Tensor, attrs: np.ndarray) -> Tensor:
    """Tensor product of channels with invariant node attributes, flattened."""
    k = attrs.shape[1]
    if x.data.ndim == 2:
        n, c = x.shape
        return ad.reshape(ad.reshape(x, (n, c, 1)) * attrs[:, None, :], (n, c * k))
    n, _, c = x.shape
    return ad.reshape(ad.reshape(x, (n, 3, c, 1)) * attrs[:, None, None, :], (n, 3, c * k))


class AttrLinear(Module):
    """Equivariant linear map conditioned on invariant node attributes (0e x 0e paths)."""

    def __init__(self, in_s, in_v, out_s, out_v, attr_dim, rng):
        super().__init__()
        self.dims = (in_s, in_v, out_s, out_v, attr_dim)
        # one-hot attributes select one weight slice per entity type
        self.ws = self.param("ws", rng.standard_normal((in_s * attr_dim, out_s))
                             / np.sqrt(max(in_s, 1)))
        self.wb = self.param("wb", np.zeros((attr_dim, out_s)))
        self.wv = self.param("wv", rng.standard_normal((in_v * attr_dim, out_v))
                             / np.sqrt(max(in_v, 1)))

    def __call__(self, s: Tensor, v: Tensor, attrs: np.ndarray) -> tuple[Tensor, Tensor]:
        n = attrs.shape[0]
        out_s = ad.matmul(attrs, self.wb)
        if self.dims[0]:
            out_s = out_s + ad.matmul(_outer_attr(s, attrs), self.ws)
        if self.dims[1]:
            out_v = ad.matmul(_outer_attr(v, attrs), self.wv)
        else:
            out_v = Tensor(np.zeros((n, 3, self.dims[3])))
        return out_s, out_v


class E3MPLayer(Module):
    """One round of equivariant message passing with mean aggregation.

    message(u -> v) = gate(CG([f_u, f_v, x_u - x_v], Y(x_u - x_v)))
    update(v)       = f_v + gate(CG([f_v, mean_u message(u -> v)], attr_v))
    """

    def __init__(self, in_s, in_v, hidden_s, hidden_v, attr_dim, rng, residual=True):
        super().__init__()
        self.in_s, self.in_v = in_s, in_v
        self.hidden_s, self.hidden_v = hidden_s, hidden_v
        ms_in = 2 * in_s + 1   # sender + receiver scalars + constant
        mv_in = 2 * in_v + 1   # sender + receiver vectors + edge vector
        pre = hidden_s + hidden_v
        self.w_ss = self.param("w_ss", glorot(rng, ms_in, pre))
        self.w_vs = self.param("w_vs", glorot(rng, mv_in, pre))
        self.w_vv = self.param("w_vv", glorot(rng, mv_in, hidden_v))
        self.w_sv = self.param("w_sv", glorot(rng, ms_in, hidden_v))
        self.update = self.child("update", AttrLinear(in_s + hidden_s, in_v + hidden_v,
                                                      pre, hidden_v, attr_dim, rng))
        self.residual = residual and in_s == hidden_s and in_v == hidden_v

    def __call__(self, batch: GraphBatch, s: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
        if s.shape[1] != self.in_s or v.shape[2] != self.in_v:
            raise SpecError(f"layer expects {self.in_s}x0e+{self.in_v}x1o, got "
                            f"{s.shape[1]}x0e+{v.shape[2]}x1o")
        E, n = len(batch.senders), batch.num_nodes
        pre_s = self.hidden_s
        if E:
            snd, rcv = batch.senders, batch.receivers
            cs, cv = self.in_s, self.in_v
            units = batch.edge_units[:, :, None]
            # linear maps of sender/receiver features are applied per node, then gathered
            m_s = (ad.gather_rows(ad.matmul(s, self.w_ss[:cs]), snd)
                   + ad.gather_rows(ad.matmul(s, self.w_ss[cs:2 * cs]), rcv) + self.w_ss[2 * cs:])
            coef = (ad.gather_rows(ad.matmul(s, self.w_sv[:cs]), snd)
                    + ad.gather_rows(ad.matmul(s, self.w_sv[cs:2 * cs]), rcv) + self.w_sv[2 * cs:])
            vu, vv = ad.gather_rows(v, snd), ad.gather_rows(v, rcv)
            edge_len = np.sum(batch.edge_vectors * batch.edge_units, axis=1, keepdims=True)
            dots = ad.concat([ad.sum_(vu * units, axis=1), ad.sum_(vv * units, axis=1),
                              edge_len], axis=1)                      # 1o x 1o -> 0e
            m_s = m_s + ad.matmul(dots, self.w_vs)
            m_v = (ad.gather_rows(ad.matmul(v, self.w_vv[:cv]), snd)
                   + ad.gather_rows(ad.matmul(v, self.w_vv[cv:2 * cv]), rcv)
                   + batch.edge_vectors[:, :, None] * self.w_vv[2 * cv:]
                   + ad.reshape(coef, (E, 1, self.hidden_v)) * units)  # 0e x 1o -> 1o
            m_s, m_v = gate(m_s, m_v, pre_s)
            inv = batch.inv_in_degree
            agg_s = ad.scatter_add_rows(m_s, batch.receivers, n) * inv
            agg_v = ad.scatter_add_rows(m_v, batch.receivers, n) * inv[:, :, None]
        else:
            agg_s = Tensor(np.zeros((n, self.hidden_s)))
            agg_v = Tensor(np.zeros((n, 3, self.hidden_v)))
        u_s, u_v = self.update(ad.concat([s, agg_s], axis=1), ad.concat([v, agg_v], axis=2),
                               batch.attrs)
        u_s, u_v = gate(u_s, u_v, pre_s)
        if self.residual:
            return s + u_s, v + u_v
        return u_s, u_v


class SEGNN(Module):
    """Embedding followed by stacked E3-MP layers."""

    def __init__(self, in_s, in_v, attr_dim, hidden_s=32, hidden_v=8, num_layers=2, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_s, self.in_v, self.attr_dim = in_s, in_v, attr_dim
        self.hidden_s, self.hidden_v = hidden_s, hidden_v
        self.embed = self.child("embed", AttrLinear(in_s, in_v, hidden_s + hidden_v, hidden_v,
                                                    attr_dim, rng))
        self.layers = [self.child(f"layer{k}", E3MPLayer(hidden_s, hidden_v, hidden_s,
                                                         hidden_v, attr_dim, rng))
                       for k in range(num_layers)]

    @property
    def hidden_spec(self) -> IrrepSpec:
        return IrrepSpec(((self.hidden_s, SCALAR), (self.hidden_v, VECTOR)))

    def __call__(self, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        if batch.attrs.shape[1] != self.attr_dim:
            raise SpecError(f"expected {self.attr_dim} node attributes, got {batch.attrs.shape[1]}")
        if batch.scalars.shape[1] != self.in_s or batch.vectors.shape[2] != self.in_v:
            raise SpecError(f"expected input {self.in_s}x0e+{self.in_v}x1o, got "
                            f"{batch.scalars.shape[1]}x0e+{batch.vectors.shape[2]}x1o")
        s, v = self.embed(batch.scalars, batch.vectors, batch.attrs)
        s, v = gate(s, v, self.hidden_s)
        for layer in self.layers:
            s, v = layer(batch, s, v)
        return s, v


def e3mp_forward(layer: E3MPLayer, graph: EuclideanGraph) -> EuclideanGraph:
    """Apply one layer to a single graph; positions and edges are unchanged."""
    batch = batch_graphs([graph])
    with ad.no_grad():
        s, v = layer(batch, batch.scalars, batch.vectors)
    spec, data = merge_features(s.data, v.data)
    return EuclideanGraph(graph.positions, graph.edges, spec, data, graph.node_attribute_spec,
                          graph.node_attributes, graph.edge_attribute_spec, graph.edge_attributes)


def squash_norm(a: Tensor, max_norm: float) -> Tensor:
    """Smooth norm clipping a -> max_norm * tanh(|a| / max_norm) * a / |a|.

    Commutes with every orthogonal map and keeps |a| < max_norm.
    """
    r = ad.l2_norm(a, axis=-1, keepdims=True)
    return a * (ad.tanh(r * (1.0 / max_norm)) * max_norm / r)


class InvariantReadout(Module):
    """Mean-pool the 0e channels per graph, then an affine map to a scalar."""

    def __init__(self, hidden_s, rng):
        super().__init__()
        self.w = self.param("w", glorot(rng, hidden_s, 1))
        self.b = self.param("b", np.zeros(1))

    def __call__(self, batch: GraphBatch, s: Tensor) -> Tensor:
        pooled = ad.scatter_add_rows(s, batch.graph_index, batch.num_graphs) * batch.inv_graph_size
        return ad.reshape(ad.matmul(pooled, self.w) + self.b, (batch.num_graphs,))


class EquivariantReadout(Module):
    """Linear combination of the 1o channels at each graph's designated vertex."""

    def __init__(self, hidden_v, rng, max_norm=1.0):
        super().__init__()
        self.w = self.param("w", glorot(rng, hidden_v, 1))
        self.max_norm = max_norm

    def __call__(self, batch: GraphBatch, v: Tensor) -> Tensor:
        if batch.self_index is None:
            raise InvalidArgumentError("equivariant readout needs a self vertex per graph")
        own = ad.gather_rows(v, batch.self_index)
        a = ad.reshape(ad.matmul(own, self.w), (batch.num_graphs, 3))
        return squash_norm(a, self.max_norm)


class SEGNNCritic(Module):
    arch = "SEGNN"

    def __init__(self, in_s, in_v, attr_dim, hidden_s=32, hidden_v=8, num_layers=2, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.body = self.child("body", SEGNN(in_s, in_v, attr_dim, hidden_s, hidden_v,
                                             num_layers, rng))
        self.readout = self.child("readout", InvariantReadout(hidden_s, rng))

    def __call__(self, batch: GraphBatch) -> Tensor:
        s, _ = self.body(batch)
        return self.readout(batch, s)


class SEGNNActor(Module):
    arch = "SEGNN"

    def __init__(self, in_s, in_v, attr_dim, hidden_s=32, hidden_v=8, num_layers=2, rng=None,
                 max_norm=1.0):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.body = self.child("body", SEGNN(in_s, in_v, attr_dim, hidden_s, hidden_v,
                                             num_layers, rng))
        self.readout = self.child("readout", EquivariantReadout(hidden_v, rng, max_norm))

    def __call__(self, batch: GraphBatch) -> Tensor:
        _, v = self.body(batch)
        return self.readout(batch, v)


def critic_forward(net: SEGNNCritic, graph: EuclideanGraph) -> float:
    with ad.no_grad():
        return float(net(batch_graphs([graph])).data[0])


def actor_forward(net: SEGNNActor, graph: EuclideanGraph, self_vertex: int) -> np.ndarray:
    if not 0 <= self_vertex < graph.num_vertices:
        raise InvalidArgumentError(f"self vertex {self_vertex} is not in the graph")
    with ad.no_grad():
        return net(batch_graphs([graph], [self_vertex])).data[0].copy()
