"""Loss and gradient oracles for the federated experiments.

Two classifiers: multinomial logistic regression (convex runs) and a
one-hidden-layer rectifier network behind a fixed PCA front end (non-convex
runs).  Both expose per-example gradients with clipping support and a flat
parameter vector; the l2 penalty applies to weight matrices only, never to
biases.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class LogisticRegression:
    """Softmax regression with l2-regularized weights."""

    def __init__(self, n_features: int, n_classes: int, l2: float = 0.0):
        self.n_features = n_features
        self.n_classes = n_classes
        self.l2 = l2
        self.dim = n_features * n_classes + n_classes

    def init_params(self, rng=None) -> np.ndarray:
        return np.zeros(self.dim)

    def unpack(self, params: np.ndarray):
        d, L = self.n_features, self.n_classes
        W = params[: d * L].reshape(d, L)
        b = params[d * L :]
        return W, b

    def transform(self, X: np.ndarray) -> np.ndarray:
        return X

    def clipped_grad_sum(self, params, X, labels, clip):
        """(sum of clipped per-example data-term gradients, unclipped norms)."""
        W, b = self.unpack(params)
        gw, gb, norms = kernels.logreg_clipped_grad_sum(
            np.ascontiguousarray(X), labels, np.ascontiguousarray(W), b, clip
        )
        return np.concatenate([gw.ravel(), gb]), norms

    def reg_grad(self, params) -> np.ndarray:
        W, _ = self.unpack(params)
        out = np.zeros_like(params)
        out[: W.size] = self.l2 * W.ravel()
        return out

    def mean_grad(self, params, X, labels) -> np.ndarray:
        gsum, _ = self.clipped_grad_sum(params, X, labels, np.inf)
        return gsum / len(labels) + self.reg_grad(params)

    def batch_loss(self, params, X, labels) -> float:
        if len(labels) == 0:
            raise ValueError("empty shard")
        W, b = self.unpack(params)
        loss, _ = kernels.logreg_loss_correct(X, labels, W, b)
        return loss / len(labels) + 0.5 * self.l2 * float(np.sum(W * W))

    def accuracy(self, params, X, labels) -> float:
        if len(labels) == 0:
            raise ValueError("empty shard")
        W, b = self.unpack(params)
        _, correct = kernels.logreg_loss_correct(X, labels, W, b)
        return correct / len(labels)

    def per_example_loss_grad(self, params, x, y):
        if not 0 <= y < self.n_classes:
            raise ValueError(f"label {y} out of range for {self.n_classes} classes")
        gsum, _ = self.clipped_grad_sum(params, x[None, :], np.array([y]), np.inf)
        loss = self.batch_loss(params, x[None, :], np.array([y]))
        return loss, gsum + self.reg_grad(params)


def pca_fit(samples: np.ndarray, k: int = 60):
    """Top-k principal directions of the centered sample covariance.

    Deterministic: exact eigendecomposition with each component's
    largest-magnitude coordinate oriented positive.  Returns
    (projection [d x k], mean [d], explained variance [k]).
    """
    n, d = samples.shape
    if k > d:
        raise ValueError(f"cannot extract {k} components from {d} features")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    P = eigvecs[:, order]
    variance = eigvals[order]
    for j in range(k):
        pivot = np.argmax(np.abs(P[:, j]))
        if P[pivot, j] < 0:
            P[:, j] = -P[:, j]
    return P, mean, variance


class OneHiddenLayerNet:
    """PCA projection, one rectifier hidden layer, softmax output."""

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        hidden: int = 200,
        pca_projection: np.ndarray | None = None,
        pca_mean: np.ndarray | None = None,
        l2: float = 0.0,
    ):
        self.n_classes = n_classes
        self.hidden = hidden
        self.l2 = l2
        self.pca_projection = pca_projection
        self.pca_mean = pca_mean
        self.n_inputs = n_features if pca_projection is None else pca_projection.shape[1]
        h, L = self.hidden, n_classes
        self._sizes = (self.n_inputs * h, h, h * L, L)
        self.dim = sum(self._sizes)

    def init_params(self, rng) -> np.ndarray:
        h, L = self.hidden, self.n_classes
        bound1 = 1.0 / np.sqrt(self.n_inputs)
        bound2 = 1.0 / np.sqrt(h)
        return np.concatenate(
            [
                rng.uniform(-bound1, bound1, self.n_inputs * h),
                rng.uniform(-bound1, bound1, h),
                rng.uniform(-bound2, bound2, h * L),
                rng.uniform(-bound2, bound2, L),
            ]
        )

    def unpack(self, params):
        n1, n2, n3, _ = self._sizes
        h, L = self.hidden, self.n_classes
        W1 = params[:n1].reshape(self.n_inputs, h)
        b1 = params[n1 : n1 + n2]
        W2 = params[n1 + n2 : n1 + n2 + n3].reshape(h, L)
        b2 = params[n1 + n2 + n3 :]
        return W1, b1, W2, b2

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.pca_projection is None:
            return X
        return (X - self.pca_mean) @ self.pca_projection

    def clipped_grad_sum(self, params, X, labels, clip):
        W1, b1, W2, b2 = self.unpack(params)
        Z = self.transform(X)
        gw1, gb1, gw2, gb2, norms = kernels.mlp_clipped_grad_sum(Z, labels, W1, b1, W2, b2, clip)
        return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2]), norms

    def reg_grad(self, params) -> np.ndarray:
        W1, b1, W2, _ = self.unpack(params)
        n1, n2, n3, _ = self._sizes
        out = np.zeros_like(params)
        out[:n1] = self.l2 * W1.ravel()
        out[n1 + n2 : n1 + n2 + n3] = self.l2 * W2.ravel()
        return out

    def mean_grad(self, params, X, labels) -> np.ndarray:
        gsum, _ = self.clipped_grad_sum(params, X, labels, np.inf)
        return gsum / len(labels) + self.reg_grad(params)

    def batch_loss(self, params, X, labels) -> float:
        if len(labels) == 0:
            raise ValueError("empty shard")
        W1, b1, W2, b2 = self.unpack(params)
        loss, _ = kernels.mlp_loss_correct(self.transform(X), labels, W1, b1, W2, b2)
        reg = 0.5 * self.l2 * (float(np.sum(W1 * W1)) + float(np.sum(W2 * W2)))
        return loss / len(labels) + reg

    def accuracy(self, params, X, labels) -> float:
        if len(labels) == 0:
            raise ValueError("empty shard")
        W1, b1, W2, b2 = self.unpack(params)
        _, correct = kernels.mlp_loss_correct(self.transform(X), labels, W1, b1, W2, b2)
        return correct / len(labels)

    def per_example_loss_grad(self, params, x, y):
        if not 0 <= y < self.n_classes:
            raise ValueError(f"label {y} out of range for {self.n_classes} classes")
        gsum, _ = self.clipped_grad_sum(params, x[None, :], np.array([y]), np.inf)
        loss = self.batch_loss(params, x[None, :], np.array([y]))
        return loss, gsum + self.reg_grad(params)
