"""Differentiable toy acoustic scorer and its frame-level pretraining.

The scorer is an affine map from per-frame features to pdf logits followed
by a log-softmax, so each score row is a normalized log-distribution over
pdfs.  Scores feed the lattice objectives directly (hybrid convention, no
prior division); gradients flow back from d(loss)/d(score) to the
parameters through the closed-form log-softmax Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import LatticeError, ScoreTable


@dataclass(frozen=True, eq=False)
class ScorerParams:
    """Affine scorer parameters; instances are immutable, updates return
    fresh instances so a frozen CE copy stays untouched."""

    weights: np.ndarray  # (feature_dim, num_pdfs)
    bias: np.ndarray     # (num_pdfs,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise LatticeError(
                f"inconsistent scorer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise LatticeError("scorer parameters must be finite")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def num_pdfs(self) -> int:
        return self.weights.shape[1]

    def step(self, grad_weights: np.ndarray, grad_bias: np.ndarray, learning_rate: float) -> "ScorerParams":
        return ScorerParams(
            weights=self.weights - learning_rate * grad_weights,
            bias=self.bias - learning_rate * grad_bias,
        )

    @classmethod
    def zeros(cls, feature_dim: int, num_pdfs: int) -> "ScorerParams":
        return cls(weights=np.zeros((feature_dim, num_pdfs)), bias=np.zeros(num_pdfs))

    @classmethod
    def random_init(cls, feature_dim: int, num_pdfs: int, seed: int, scale: float = 0.1) -> "ScorerParams":
        rng = np.random.default_rng(seed)
        return cls(weights=rng.normal(0.0, scale, size=(feature_dim, num_pdfs)),
                   bias=np.zeros(num_pdfs))


def score_frames(params: ScorerParams, features: np.ndarray) -> ScoreTable:
    """Per-frame log-softmax scores, shape (num_frames, num_pdfs)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.feature_dim:
        raise LatticeError(
            f"features have shape {features.shape}, scorer expects (*, {params.feature_dim})"
        )
    z = features @ params.weights + params.bias
    z -= z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def score_frames_vjp(params: ScorerParams, features: np.ndarray):
    """Scores plus the backward map d(loss)/d(scores) -> parameter grads."""
    features = np.asarray(features, dtype=np.float64)
    scores = score_frames(params, features)
    softmax = np.exp(scores)

    def vjp(grad_scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gz = grad_scores - softmax * grad_scores.sum(axis=1, keepdims=True)
        return features.T @ gz, gz.sum(axis=0)

    return scores, vjp


def ce_loss_and_grads(params: ScorerParams, features: np.ndarray, targets: np.ndarray):
    """Mean per-frame negative log-likelihood of the target pdfs."""
    scores, vjp = score_frames_vjp(params, features)
    t = np.arange(len(targets))
    loss = -scores[t, targets].mean()
    grad_scores = np.zeros_like(scores)
    grad_scores[t, targets] = -1.0 / len(targets)
    gw, gb = vjp(grad_scores)
    return loss, gw, gb


def ce_pretrain(
    dataset,
    feature_dim: int,
    num_pdfs: int,
    iterations: int,
    learning_rate: float,
    init_seed: int,
) -> ScorerParams:
    """Frame-level cross-entropy training against the true alignments.

    Plain full-batch gradient descent; utterances contribute in dataset
    order so runs are bit-reproducible.  Returns the parameters to be
    frozen as the CE model.
    """
    params = ScorerParams.random_init(feature_dim, num_pdfs, seed=init_seed)
    targets = [np.array(u.true_alignment.pdf_sequence, dtype=np.int64) for u in dataset]
    for _ in range(iterations):
        gw = np.zeros_like(params.weights)
        gb = np.zeros_like(params.bias)
        total = 0.0
        for u, tgt in zip(dataset, targets):
            loss, gw_u, gb_u = ce_loss_and_grads(params, u.features, tgt)
            total += loss
            gw += gw_u
            gb += gb_u
        if not np.isfinite(total):
            raise LatticeError("cross-entropy training diverged (non-finite loss)")
        n = len(dataset)
        params = params.step(gw / n, gb / n, learning_rate)
    return params


def frame_accuracy(params: ScorerParams, dataset) -> float:
    """Fraction of frames whose argmax score matches the true pdf."""
    hit = 0
    total = 0
    for u in dataset:
        pred = score_frames(params, u.features).argmax(axis=1)
        tgt = np.array(u.true_alignment.pdf_sequence)
        hit += int((pred == tgt).sum())
        total += len(tgt)
    return hit / total
