"""Scikit-learn style estimator facade over the training pipeline.

``X`` is a sequence of :class:`~graphpine.dataset.SampleTensor` objects
sharing one graph, not a numeric matrix, so this classifier composes with
model selection utilities that treat X as an opaque indexable (manual
loops, ``clone``, grid search over parameters) rather than with
transformers that assume 2-D arrays.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .dataset import SampleTensor
from .exceptions import DegenerateSplit
from .model import GraphPineModel, predict
from .train import TrainConfig, train
from .validation import check_samples, resolve_labels


class GraphPineClassifier(BaseEstimator, ClassifierMixin):
    """Binary drug-response classifier with importance propagation.

    ``fit`` carves a validation subset off the training samples (for early
    stopping), trains, and keeps the best-epoch model in ``model_``.
    """

    def __init__(
        self,
        layers: int = 3,
        hidden: int = 64,
        heads: int = 1,
        decay: float = 0.8,
        threshold: float = 0.1,
        dropout: float = 0.2,
        gate_enabled: bool = True,
        w_bce: float = 1.0,
        w_imp: float = 0.01,
        epochs: int = 100,
        batch_size: int = 32,
        lr: float = 1e-3,
        patience: int = 30,
        min_delta: float = 1e-4,
        val_fraction: float = 0.2,
        seed: int = 0,
    ) -> None:
        self.layers = layers
        self.hidden = hidden
        self.heads = heads
        self.decay = decay
        self.threshold = threshold
        self.dropout = dropout
        self.gate_enabled = gate_enabled
        self.w_bce = w_bce
        self.w_imp = w_imp
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.patience = patience
        self.min_delta = min_delta
        self.val_fraction = val_fraction
        self.seed = seed

    def fit(self, X: Sequence[SampleTensor], y: Optional[Sequence[int]] = None) -> "GraphPineClassifier":
        samples = check_samples(X)
        labels = resolve_labels(samples, y)
        if y is not None:
            samples = [
                SampleTensor(
                    drug_id=s.drug_id,
                    cell_id=s.cell_id,
                    features=s.features,
                    importance=s.importance,
                    label=int(lab),
                    graph=s.graph,
                )
                for s, lab in zip(samples, labels)
            ]
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(samples))
        n_val = int(np.floor(self.val_fraction * len(samples)))
        if n_val < 1 or n_val >= len(samples):
            raise DegenerateSplit(
                f"val_fraction={self.val_fraction} on {len(samples)} samples leaves "
                f"{n_val} validation samples"
            )
        val = [samples[i] for i in order[:n_val]]
        tr = [samples[i] for i in order[n_val:]]
        model = GraphPineModel.build(
            layers=self.layers,
            hidden=self.hidden,
            heads=self.heads,
            alpha=self.decay,
            theta=self.threshold,
            dropout=self.dropout,
            w_bce=self.w_bce,
            w_imp=self.w_imp,
            gate_enabled=self.gate_enabled,
            seed=self.seed,
        )
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=self.seed,
        )
        self.model_, self.train_log_ = train(model, tr, val, config)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X: Sequence[SampleTensor]) -> np.ndarray:
        self._check_fitted()
        samples = check_samples(X)
        probs = np.array([predict(s, self.model_).prob for s in samples])
        return np.column_stack([1.0 - probs, probs])

    def predict(self, X: Sequence[SampleTensor]) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def explain(self, X: Sequence[SampleTensor]) -> list[np.ndarray]:
        """Final propagated importance vector for each sample."""
        self._check_fitted()
        return [predict(s, self.model_).final_importance for s in check_samples(X)]

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("this GraphPineClassifier is not fitted yet; call fit first")
