"""Per-round evaluation quantities and the reference optimum.

The convex experiments report the log10 gap to the centralized optimum; the
non-convex ones fall back to the raw training loss, disambiguated by the
metric_kind field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAP_FLOOR = 1e-12
GAP_FLOOR_LOG10 = -12.0


@dataclass
class RoundMetrics:
    round: int
    train_loss: float
    metric_kind: str
    accuracy: float
    grad_dissim: float
    grad_log_dissim: float
    eps_so_far: float
    clip_c: float


def minimize_gd(loss_fn, grad_fn, x0, gtol: float = 1e-8, max_iter: int = 100_000):
    """Full-batch gradient descent with backtracking (Armijo) line search.

    The accepted step doubles on success so the search self-tunes to the local
    curvature.  Returns (x, grad_norm, iterations, converged).
    """
    x = x0.copy()
    fx = loss_fn(x)
    step = 1.0
    for it in range(max_iter):
        g = grad_fn(x)
        gnorm2 = float(g @ g)
        gnorm = math.sqrt(gnorm2)
        if gnorm <= gtol:
            return x, gnorm, it, True
        step *= 2.0
        while step > 1e-20:
            x_new = x - step * g
            f_new = loss_fn(x_new)
            if f_new <= fx - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        else:
            return x, gnorm, it, False
        x, fx = x_new, f_new
    return x, float(np.linalg.norm(grad_fn(x))), max_iter, False


def reference_optimum(dataset, model, gtol: float = 1e-8, max_iter: int = 100_000):
    """Centralized minimizer of the regularized objective on the train pool.

    Returns (params, loss, info); info carries the achieved gradient norm so
    callers can flag gap metrics built on a non-converged optimum.
    """
    X, y = dataset.train_pool()
    x0 = model.init_params(np.random.default_rng(0))
    x_star, gnorm, iters, converged = minimize_gd(
        lambda p: model.batch_loss(p, X, y),
        lambda p: model.mean_grad(p, X, y),
        x0,
        gtol=gtol,
        max_iter=max_iter,
    )
    info = {"grad_norm": gnorm, "iterations": iters, "converged": converged}
    return x_star, model.batch_loss(x_star, X, y), info


def user_gradient_norms(dataset, model, params):
    """((1/M) sum ||grad F_i||^2, ||grad F||^2) over full train shards."""
    grads = [
        model.mean_grad(params, *dataset.user_train(i)) for i in range(dataset.n_users)
    ]
    local_sq = float(np.mean([g @ g for g in grads]))
    mean_grad = np.mean(grads, axis=0)
    return local_sq, float(mean_grad @ mean_grad)


def grad_dissimilarity(dataset, model, params) -> float:
    """(1/M) sum ||grad F_i||^2 - ||grad F||^2 (nonnegative by Jensen)."""
    local_sq, global_sq = user_gradient_norms(dataset, model, params)
    return local_sq - global_sq


def grad_log_dissimilarity(dataset, model, params) -> float:
    local_sq, global_sq = user_gradient_norms(dataset, model, params)
    if local_sq <= 0.0 or global_sq <= 0.0:
        return 0.0
    return math.log(local_sq) - math.log(global_sq)


def mean_test_accuracy(dataset, model, params) -> float:
    """Test accuracy averaged over users."""
    accs = [model.accuracy(params, *dataset.user_test(i)) for i in range(dataset.n_users)]
    return float(np.mean(accs))


def train_loss_metric(loss: float, reference_loss: float | None):
    """(value, metric_kind) for the train-loss column.

    With a reference optimum the value is log10 of the gap, floored at
    GAP_FLOOR with the kind marking the floor; without one the raw loss is
    reported.
    """
    if reference_loss is None:
        return loss, "raw_loss"
    gap = loss - reference_loss
    if gap <= GAP_FLOOR:
        return GAP_FLOOR_LOG10, "log10_gap_floor"
    return math.log10(gap), "log10_gap"


def compute_round_metrics(
    t, model, params, dataset, reference_loss, eps_so_far, clip_c
) -> RoundMetrics:
    pool_X, pool_y = dataset.train_pool()
    loss = model.batch_loss(params, pool_X, pool_y)
    value, kind = train_loss_metric(loss, reference_loss)
    local_sq, global_sq = user_gradient_norms(dataset, model, params)
    log_dissim = (
        math.log(local_sq) - math.log(global_sq) if local_sq > 0 and global_sq > 0 else 0.0
    )
    return RoundMetrics(
        round=t,
        train_loss=value,
        metric_kind=kind,
        accuracy=mean_test_accuracy(dataset, model, params),
        grad_dissim=local_sq - global_sq,
        grad_log_dissim=log_dissim,
        eps_so_far=eps_so_far,
        clip_c=clip_c,
    )


def tail_average(values, fraction: float = 0.1) -> float:
    """Mean over the final ceil(fraction * n) entries."""
    values = list(values)
    if not values:
        raise ValueError("empty trace")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    n_tail = math.ceil(fraction * len(values))
    return float(np.mean(values[-n_tail:]))
