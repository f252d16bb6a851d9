"""Euclidean graphs and their batched, network-ready form."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..autodiff import Tensor
from ..errors import InvalidArgumentError, SpecError
from ..group import SCALAR, VECTOR, GroupElement, IrrepSpec, transform_features, unit_directions


@dataclass(frozen=True)
class EuclideanGraph:
    positions: np.ndarray         # (n, 3)
    edges: np.ndarray             # (E, 2) int, rows are (sender, receiver)
    node_feature_spec: IrrepSpec
    node_features: np.ndarray     # (n, node_feature_spec.dim)
    node_attribute_spec: IrrepSpec
    node_attributes: np.ndarray   # (n, node_attribute_spec.dim)
    edge_attribute_spec: IrrepSpec
    edge_attributes: np.ndarray   # (E, edge_attribute_spec.dim)

    def __post_init__(self):
        n = self.positions.shape[0]
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", e)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise InvalidArgumentError("edge endpoint is not a valid vertex id")
        if np.any(e[:, 0] == e[:, 1]):
            raise InvalidArgumentError("self-loops are not allowed")
        for name, spec, arr, rows in (
                ("node_features", self.node_feature_spec, self.node_features, n),
                ("node_attributes", self.node_attribute_spec, self.node_attributes, n),
                ("edge_attributes", self.edge_attribute_spec, self.edge_attributes, len(e))):
            if arr.shape != (rows, spec.dim):
                raise SpecError(f"{name} has shape {arr.shape}, expected {(rows, spec.dim)}")

    @property
    def num_vertices(self) -> int:
        return self.positions.shape[0]

    def transform(self, g: GroupElement) -> EuclideanGraph:
        """T_g: move vertices and transform every steerable feature."""
        return replace(
            self,
            positions=g.apply_points(self.positions),
            node_features=transform_features(self.node_feature_spec, self.node_features, g),
            node_attributes=transform_features(self.node_attribute_spec, self.node_attributes, g),
            edge_attributes=transform_features(self.edge_attribute_spec, self.edge_attributes, g),
        )


def split_features(spec: IrrepSpec, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat (n, dim) features -> scalars (n, c0) and vectors (n, 3, c1).

    Only 0e and 1o channels are supported by the networks.
    """
    for _, ir in spec.blocks:
        if ir not in (SCALAR, VECTOR):
            raise SpecError(f"networks only accept 0e and 1o channels, spec has {ir}")
    si = spec.channel_indices(SCALAR)[:, 0]
    vi = spec.channel_indices(VECTOR)
    n = data.shape[0]
    scalars = data[:, si]
    vectors = data[:, vi].transpose(0, 2, 1) if len(vi) else np.zeros((n, 3, 0))
    return scalars, vectors


def merge_features(scalars: np.ndarray, vectors: np.ndarray) -> tuple[IrrepSpec, np.ndarray]:
    """Inverse of :func:`split_features` into the layout ``c0x0e + c1x1o``."""
    c0, c1 = scalars.shape[1], vectors.shape[2]
    blocks = []
    if c0:
        blocks.append((c0, SCALAR))
    if c1:
        blocks.append((c1, VECTOR))
    data = np.concatenate([scalars, vectors.transpose(0, 2, 1).reshape(len(scalars), 3 * c1)],
                          axis=1)
    return IrrepSpec(tuple(blocks)), data


@dataclass
class GraphBatch:
    """Disjoint union of graphs with features split into scalar/vector tensors."""

    positions: np.ndarray      # (n, 3)
    senders: np.ndarray        # (E,)
    receivers: np.ndarray      # (E,)
    scalars: Tensor            # (n, c0)
    vectors: Tensor            # (n, 3, c1)
    attrs: np.ndarray          # (n, k) invariant node attributes
    edge_vectors: np.ndarray   # (E, 3) edge attribute (relative position)
    edge_units: np.ndarray     # (E, 3) degree-1 spherical harmonics of x_u - x_v
    graph_index: np.ndarray    # (n,)
    num_graphs: int
    self_index: np.ndarray | None = None  # (num_graphs,) global vertex ids

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def inv_in_degree(self) -> np.ndarray:
        deg = np.bincount(self.receivers, minlength=self.num_nodes).astype(np.float64)
        return (1.0 / np.maximum(deg, 1.0))[:, None]

    @property
    def inv_graph_size(self) -> np.ndarray:
        cnt = np.bincount(self.graph_index, minlength=self.num_graphs).astype(np.float64)
        return (1.0 / np.maximum(cnt, 1.0))[:, None]


def edge_geometry(positions: np.ndarray, senders: np.ndarray, receivers: np.ndarray):
    d = positions[senders] - positions[receivers]
    return d, unit_directions(d)


def batch_graphs(graphs: Sequence[EuclideanGraph],
                 self_vertices: Sequence[int] | None = None) -> GraphBatch:
    """Concatenate single graphs into one :class:`GraphBatch`."""
    if not graphs:
        raise InvalidArgumentError("empty graph list")
    spec0 = graphs[0]
    for g in graphs:
        if (g.node_feature_spec != spec0.node_feature_spec
                or g.node_attribute_spec != spec0.node_attribute_spec
                or g.edge_attribute_spec != spec0.edge_attribute_spec):
            raise SpecError("graphs in a batch must share feature specs")
    if spec0.edge_attribute_spec != IrrepSpec.parse("1x1o"):
        raise SpecError(f"edge attributes must be a single 1o vector, got {spec0.edge_attribute_spec}")
    for _, ir in spec0.node_attribute_spec.blocks:
        if ir != SCALAR:
            raise SpecError("node attributes must be 0e scalars")
    offsets = np.cumsum([0] + [g.num_vertices for g in graphs])
    pos = np.concatenate([g.positions for g in graphs])
    send = np.concatenate([g.edges[:, 0] + o for g, o in zip(graphs, offsets)])
    recv = np.concatenate([g.edges[:, 1] + o for g, o in zip(graphs, offsets)])
    feats = np.concatenate([g.node_features for g in graphs])
    s, v = split_features(spec0.node_feature_spec, feats)
    ev = np.concatenate([g.edge_attributes for g in graphs])
    _, units = edge_geometry(pos, send.astype(np.int64), recv.astype(np.int64))
    gi = np.concatenate([np.full(g.num_vertices, k) for k, g in enumerate(graphs)])
    si = None
    if self_vertices is not None:
        si = np.asarray(self_vertices, dtype=np.int64) + offsets[:-1]
    return GraphBatch(pos, send.astype(np.int64), recv.astype(np.int64), Tensor(s), Tensor(v),
                      np.concatenate([g.node_attributes for g in graphs]), ev, units, gi,
                      len(graphs), si)
