"""Importance-propagation layer: edge-aware attention plus a gated update.

One layer does four things, in order:

1. multi-head attention over each node's in-neighbors (plus a self-loop
   with a zero edge vector), where edge-type embeddings shift both the
   attention keys and the message values;
2. a sigmoid gate over [node representation, current importance] that mixes
   the attended representation with the layer input;
3. a linear projection of the mixed representation to a fresh importance
   estimate;
4. exponential-decay blending of old and new importance, min-max
   normalization, and thresholding (entries below theta drop to zero).

The decay factor alpha preserves accumulated importance; the threshold
theta sparsifies it. Outputs therefore live in {0} union [theta, 1].
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .exceptions import DimensionMismatch
from .graph import GeneGraph, NUM_EDGE_TYPES


@dataclass(frozen=True)
class IpLayerConfig:
    """Shape and update hyperparameters for one layer."""

    d_in: int
    d_out: int
    heads: int = 1
    alpha: float = 0.8  # decay: weight of the incoming importance
    theta: float = 0.1  # sparsification threshold on normalized importance

    def __post_init__(self) -> None:
        if self.d_in < 1 or self.d_out < 1 or self.heads < 1:
            raise DimensionMismatch(
                f"d_in={self.d_in}, d_out={self.d_out}, heads={self.heads} must be positive"
            )
        if self.d_out % self.heads:
            raise DimensionMismatch(f"d_out={self.d_out} not divisible by heads={self.heads}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")

    @property
    def d_head(self) -> int:
        return self.d_out // self.heads


@dataclass
class IpLayerParams:
    """Tensor views for one layer, usually resolved from a ParamStore."""

    w_q: list[Tensor]  # per head, (d_in, d_head)
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_e: list[Tensor]  # per head, (7, d_head)
    w_g: Tensor  # (d_out + 1, d_out)
    b_g: Tensor  # (d_out,)
    w_p: Tensor  # (d_out, 1)
    b_p: Tensor  # (1,)
    w_in: Optional[Tensor] = None  # (d_in, d_out) residual width adapter


def init_ip_layer_params(
    store: ParamStore,
    prefix: str,
    cfg: IpLayerConfig,
    rng: np.random.Generator,
) -> IpLayerParams:
    """Register Glorot-initialized layer parameters under ``prefix``."""

    def glorot(fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)

    dh = cfg.d_head
    w_q, w_k, w_v, w_e = [], [], [], []
    for h in range(cfg.heads):
        w_q.append(store.add(f"{prefix}.heads.{h}.w_q", glorot(cfg.d_in, dh, (cfg.d_in, dh))))
        w_k.append(store.add(f"{prefix}.heads.{h}.w_k", glorot(cfg.d_in, dh, (cfg.d_in, dh))))
        w_v.append(store.add(f"{prefix}.heads.{h}.w_v", glorot(cfg.d_in, dh, (cfg.d_in, dh))))
        w_e.append(
            store.add(f"{prefix}.heads.{h}.w_e", glorot(NUM_EDGE_TYPES, dh, (NUM_EDGE_TYPES, dh)))
        )
    params = IpLayerParams(
        w_q=w_q,
        w_k=w_k,
        w_v=w_v,
        w_e=w_e,
        w_g=store.add(f"{prefix}.w_g", glorot(cfg.d_out + 1, cfg.d_out, (cfg.d_out + 1, cfg.d_out))),
        b_g=store.add(f"{prefix}.b_g", np.zeros(cfg.d_out)),
        w_p=store.add(f"{prefix}.w_p", glorot(cfg.d_out, 1, (cfg.d_out, 1))),
        b_p=store.add(f"{prefix}.b_p", np.zeros(1)),
    )
    if cfg.d_in != cfg.d_out:
        params.w_in = store.add(
            f"{prefix}.w_in", glorot(cfg.d_in, cfg.d_out, (cfg.d_in, cfg.d_out))
        )
    return params


# Per-graph cache of the self-loop-augmented edge arrays. Keyed weakly so
# graphs can be garbage collected.
_AUGMENTED: "weakref.WeakKeyDictionary[GeneGraph, tuple[np.ndarray, np.ndarray, Tensor]]" = (
    weakref.WeakKeyDictionary()
)


def _augmented_edges(graph: GeneGraph) -> tuple[np.ndarray, np.ndarray, Tensor]:
    cached = _AUGMENTED.get(graph)
    if cached is not None:
        return cached
    n = graph.node_count
    loop = np.arange(n, dtype=np.int64)
    src = np.concatenate([graph.src_indices, loop])
    dst = np.concatenate([graph.dst_indices, loop])
    attr = np.vstack([graph.edge_attr, np.zeros((n, NUM_EDGE_TYPES))])
    entry = (src, dst, Tensor(attr))
    _AUGMENTED[graph] = entry
    return entry


def edge_attention_conv(
    x: Tensor,
    graph: GeneGraph,
    params: IpLayerParams,
    cfg: IpLayerConfig,
) -> Tensor:
    """Edge-type-aware attention over in-neighbors, one output per node.

    Every node attends to its in-neighbors and to itself via an implicit
    self-loop carrying a zero edge vector; attention weights are a softmax
    over each destination's incoming edges, scaled by 1/sqrt(d_head).
    Heads are concatenated to width d_out.
    """
    if x.shape != (graph.node_count, cfg.d_in):
        raise DimensionMismatch(f"features {x.shape} vs ({graph.node_count}, {cfg.d_in})")
    src, dst, edge_attr = _augmented_edges(graph)
    n = graph.node_count
    scale = 1.0 / math.sqrt(cfg.d_head)
    head_outputs: list[Tensor] = []
    for h in range(cfg.heads):
        queries = x @ params.w_q[h]
        keys = x @ params.w_k[h]
        values = x @ params.w_v[h]
        edge_shift = edge_attr @ params.w_e[h]
        q_per_edge = ad.gather_rows(queries, dst)
        k_per_edge = ad.gather_rows(keys, src) + edge_shift
        scores = (q_per_edge * k_per_edge).sum(axis=1) * scale
        weights = ad.segment_softmax(scores, dst, n)
        messages = ad.scale_rows(ad.gather_rows(values, src) + edge_shift, weights)
        head_outputs.append(ad.segment_sum(messages, dst, n))
    return head_outputs[0] if cfg.heads == 1 else ad.concat(head_outputs, axis=1)


def importance_gate(
    h: Tensor,
    x_proj: Tensor,
    importance: Tensor,
    params: IpLayerParams,
) -> tuple[Tensor, Tensor]:
    """Sigmoid gate over [h, importance]; returns (gate, mixed features).

    The mix is ``g * h + (1 - g) * x_proj``, so a gate near one trusts the
    attended representation and a gate near zero keeps the layer input.
    """
    n = h.shape[0]
    if importance.shape != (n,):
        raise DimensionMismatch(f"importance {importance.shape} vs {n} nodes")
    if (importance.data < 0.0).any() or (importance.data > 1.0).any():
        raise ValueError("importance values must lie in [0, 1]")
    gate_input = ad.concat([h, importance.reshape((n, 1))], axis=1)
    gate = ad.sigmoid(gate_input @ params.w_g + params.b_g)
    mixed = gate * h + (1.0 - gate) * x_proj
    return gate, mixed


def propagate_importance(x_hat: Tensor, params: IpLayerParams) -> Tensor:
    """Project mixed node features to one raw importance value per node."""
    n = x_hat.shape[0]
    return (x_hat @ params.w_p).reshape((n,)) + params.b_p


def decay_normalize_threshold(
    i_prev: Tensor,
    i_new: Tensor,
    cfg: IpLayerConfig,
) -> Tensor:
    """Blend importance with decay alpha, min-max normalize, threshold.

    With a degenerate value range (all blended entries equal) the output is
    all ones by convention, which keeps downstream layers well-defined.
    Otherwise entries are mapped to [0, 1] and those below theta become 0,
    so results lie in {0} union [theta, 1].
    """
    blended = cfg.alpha * i_prev + (1.0 - cfg.alpha) * i_new
    lo = ad.reduce_min(blended)
    hi = ad.reduce_max(blended)
    if hi.item() == lo.item():
        return Tensor(np.ones_like(blended.data))
    normalized = (blended - lo) / (hi - lo)
    keep = (normalized.data >= cfg.theta).astype(np.float64)
    return normalized * Tensor(keep)


def ip_layer_forward(
    x: Tensor,
    importance: Tensor,
    graph: GeneGraph,
    params: IpLayerParams,
    cfg: IpLayerConfig,
    gate_enabled: bool = True,
) -> tuple[Tensor, Tensor]:
    """Full layer: attention, gated mix, importance update.

    Returns (mixed features, updated importance). With ``gate_enabled``
    False the gate is forced to one, i.e. the attended representation
    passes through unmixed and importance cannot influence features.
    """
    if params.w_in is not None:
        x_proj = x @ params.w_in
    else:
        if cfg.d_in != cfg.d_out:
            raise DimensionMismatch(f"layer needs a width adapter for {cfg.d_in} -> {cfg.d_out}")
        x_proj = x
    h = edge_attention_conv(x, graph, params, cfg)
    if gate_enabled:
        _, mixed = importance_gate(h, x_proj, importance, params)
    else:
        mixed = h
    i_new = propagate_importance(mixed, params)
    i_final = decay_normalize_threshold(importance, i_new, cfg)
    return mixed, i_final
