"""Stacked importance-propagation layers with a mean-pool sigmoid readout."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .dataset import SampleTensor
from .exceptions import DimensionMismatch
from .ip_layer import IpLayerConfig, IpLayerParams, init_ip_layer_params, ip_layer_forward

NORM_EPS = 1e-5
PROB_CLAMP = 1e-7

N_FEATURES = 4  # exp, met, mut, cnv


@dataclass(frozen=True)
class Prediction:
    """Model output for one sample: response probability and explanation."""

    prob: float
    label: int
    final_importance: np.ndarray


@dataclass
class GraphPineModel:
    """Model hyperparameters plus the parameter store.

    Parameters depend only on feature widths, never on the graph size, so a
    trained model runs on any graph with 4-column node features. The node
    count of the training graph is recorded for checkpoint sanity checks.
    """

    layer_configs: list[IpLayerConfig]
    dropout: float
    w_bce: float
    w_imp: float
    gate_enabled: bool
    params: ParamStore
    layer_params: list[IpLayerParams]
    node_count: Optional[int] = None

    @classmethod
    def build(
        cls,
        layers: int = 3,
        hidden: int = 64,
        heads: int = 1,
        alpha: float = 0.8,
        theta: float = 0.1,
        dropout: float = 0.2,
        w_bce: float = 1.0,
        w_imp: float = 0.01,
        gate_enabled: bool = True,
        seed: int = 0,
    ) -> "GraphPineModel":
        """Construct a freshly initialized model from hyperparameters."""
        if layers < 1:
            raise DimensionMismatch(f"need at least one layer, got {layers}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        rng = np.random.default_rng(seed)
        store = ParamStore()
        configs: list[IpLayerConfig] = []
        layer_params: list[IpLayerParams] = []
        d_in = N_FEATURES
        for layer in range(layers):
            cfg = IpLayerConfig(d_in=d_in, d_out=hidden, heads=heads, alpha=alpha, theta=theta)
            configs.append(cfg)
            layer_params.append(init_ip_layer_params(store, f"layers.{layer}", cfg, rng))
            store.add(f"norms.{layer}.gamma", np.ones(hidden))
            store.add(f"norms.{layer}.beta", np.zeros(hidden))
            store.add(f"norms.{layer}.mean_scale", np.ones(hidden))
            d_in = hidden
        bound = np.sqrt(6.0 / (hidden + 1))
        store.add("readout.w_f", rng.uniform(-bound, bound, size=hidden))
        store.add("readout.b_f", np.zeros(1))
        return cls(
            layer_configs=configs,
            dropout=dropout,
            w_bce=w_bce,
            w_imp=w_imp,
            gate_enabled=gate_enabled,
            params=store,
            layer_params=layer_params,
        )

    @property
    def hyperparameters(self) -> dict:
        cfg = self.layer_configs[0]
        return {
            "layers": len(self.layer_configs),
            "hidden": cfg.d_out,
            "heads": cfg.heads,
            "alpha": cfg.alpha,
            "theta": cfg.theta,
            "dropout": self.dropout,
            "w_bce": self.w_bce,
            "w_imp": self.w_imp,
            "gate_enabled": self.gate_enabled,
            "node_count": self.node_count,
        }


def graph_norm(x: Tensor, gamma: Tensor, beta: Tensor, mean_scale: Tensor) -> Tensor:
    """Per-channel normalization over the sample's nodes.

    Subtracts a learnable fraction of the channel mean, divides by the
    standard deviation of the shifted values (population variance plus a
    1e-5 floor), then applies the affine gamma/beta. Statistics are always
    per sample; there is no running state.
    """
    mean = x.mean(axis=0)
    centered = x - mean_scale * mean
    var = (centered * centered).mean(axis=0)
    return gamma * (centered / ad.sqrt(var + NORM_EPS)) + beta


def forward_tensors(
    sample: SampleTensor,
    model: GraphPineModel,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, Tensor]:
    """Differentiable forward pass; returns (probability, final importance).

    Layer loop: IP layer, graph norm, dropout (training only), ReLU. The
    readout is a sigmoid over an affine map of the node-mean representation.
    """
    if sample.features.shape[1] != N_FEATURES:
        raise DimensionMismatch(f"expected {N_FEATURES} feature columns, got {sample.features.shape}")
    if train_mode and model.dropout > 0.0 and rng is None:
        raise ValueError("training-mode forward with dropout needs a generator")
    store = model.params
    x = Tensor(sample.features)
    importance = Tensor(sample.importance)
    for layer, (cfg, lp) in enumerate(zip(model.layer_configs, model.layer_params)):
        x, importance = ip_layer_forward(
            x, importance, sample.graph, lp, cfg, gate_enabled=model.gate_enabled
        )
        x = graph_norm(
            x,
            store[f"norms.{layer}.gamma"],
            store[f"norms.{layer}.beta"],
            store[f"norms.{layer}.mean_scale"],
        )
        if train_mode and model.dropout > 0.0:
            x = ad.dropout(x, model.dropout, rng)
        x = ad.relu(x)
    pooled = x.mean(axis=0)
    logit = (pooled * store["readout.w_f"]).sum() + store["readout.b_f"]
    prob = ad.sigmoid(logit)
    return prob, importance


def loss_tensor(prob: Tensor, importance: Tensor, label: int, model: GraphPineModel) -> Tensor:
    """Weighted BCE plus an L1 penalty on the final importance vector.

    The probability is clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    clamped = ad.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = float(label)
    bce = -(y * ad.log(clamped) + (1.0 - y) * ad.log(1.0 - clamped))
    sparsity = ad.absolute(importance).mean()
    return model.w_bce * bce + model.w_imp * sparsity


def loss(pred: Prediction, label: int, model: GraphPineModel) -> float:
    """Scalar loss of a finished prediction, same formula as training."""
    p = min(max(pred.prob, PROB_CLAMP), 1.0 - PROB_CLAMP)
    y = float(label)
    bce = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    sparsity = float(np.abs(pred.final_importance).mean())
    return float(model.w_bce * bce + model.w_imp * sparsity)


def forward(
    sample: SampleTensor,
    model: GraphPineModel,
    train_mode: bool = False,
    seed: Optional[int] = None,
) -> Prediction:
    """Non-differentiable forward pass producing a :class:`Prediction`."""
    rng = np.random.default_rng(seed) if train_mode and model.dropout > 0.0 else None
    with ad.no_grad():
        prob, importance = forward_tensors(sample, model, train_mode=train_mode, rng=rng)
    p = prob.item()
    return Prediction(prob=p, label=1 if p >= 0.5 else 0, final_importance=importance.data.copy())


def predict(sample: SampleTensor, model: GraphPineModel) -> Prediction:
    """Inference-mode forward; the label threshold is 0.5, ties predict 1."""
    return forward(sample, model, train_mode=False)
