"""Vectorized per-example gradient kernels.

The per-example softmax cross-entropy gradient factorizes into outer
products, so clipping weights come from cheap row norms and the clipped sum
collapses into matrix products.  BLAS and vectorized transcendentals make
this the fastest backend available here; benchmarks/bench_kernels.py
compares it against a naive per-example loop.
"""

import numpy as np


def softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _clip_weights(norms, clip):
    weights = np.ones_like(norms)
    if not np.isinf(clip):
        over = norms > clip
        weights[over] = clip / norms[over]
    return weights


def logreg_clipped_grad_sum(X, labels, W, b, clip):
    """Sum of clipped per-example cross-entropy gradients for softmax regression.

    The gradient of example (x, y) is (outer(x, e), e) with e = p - onehot(y),
    hence its l2 norm is sqrt(1 + ||x||^2) ||e||.  Returns
    (gw_sum [d x L], gb_sum [L], unclipped norms [B]).
    """
    E = softmax_rows(X @ W + b)
    E[np.arange(len(labels)), labels] -= 1.0
    enorm = np.sqrt(np.einsum("ij,ij->i", E, E))
    xnorm2 = np.einsum("ij,ij->i", X, X)
    norms = np.sqrt(1.0 + xnorm2) * enorm
    Ew = E * _clip_weights(norms, clip)[:, None]
    return X.T @ Ew, Ew.sum(axis=0), norms


def logreg_loss_correct(X, labels, W, b):
    """(summed cross-entropy loss, correct-prediction count) over a batch."""
    Z = X @ W + b
    zmax = Z.max(axis=1)
    lse = zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1))
    loss = float((lse - Z[np.arange(len(labels)), labels]).sum())
    correct = int((Z.argmax(axis=1) == labels).sum())
    return loss, correct


def mlp_clipped_grad_sum(X, labels, W1, b1, W2, b2, clip):
    """Clipped per-example gradient sum for a one-hidden-layer rectifier net.

    Per-example blocks are (outer(x, d), d, outer(h, e), e) with
    e = p - onehot(y) and d = (W2 e) gated by the active units, so the norm is
    sqrt((1 + ||h||^2) ||e||^2 + (1 + ||x||^2) ||d||^2).
    Returns (gw1_sum, gb1_sum, gw2_sum, gb2_sum, norms).
    """
    Z1 = X @ W1 + b1
    H = np.maximum(Z1, 0.0)
    E = softmax_rows(H @ W2 + b2)
    E[np.arange(len(labels)), labels] -= 1.0
    D = (E @ W2.T) * (Z1 > 0.0)
    en2 = np.einsum("ij,ij->i", E, E)
    dn2 = np.einsum("ij,ij->i", D, D)
    hn2 = np.einsum("ij,ij->i", H, H)
    xn2 = np.einsum("ij,ij->i", X, X)
    norms = np.sqrt((1.0 + hn2) * en2 + (1.0 + xn2) * dn2)
    w = _clip_weights(norms, clip)[:, None]
    Ew = E * w
    Dw = D * w
    return X.T @ Dw, Dw.sum(axis=0), H.T @ Ew, Ew.sum(axis=0), norms


def mlp_loss_correct(X, labels, W1, b1, W2, b2):
    """(summed cross-entropy loss, correct count) for the rectifier net."""
    H = np.maximum(X @ W1 + b1, 0.0)
    Z = H @ W2 + b2
    zmax = Z.max(axis=1)
    lse = zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1))
    loss = float((lse - Z[np.arange(len(labels)), labels]).sum())
    correct = int((Z.argmax(axis=1) == labels).sum())
    return loss, correct
