"""Round/local-step state machine for (DP-)SCAFFOLD and (DP-)FedAvg.

Each round the server samples floor(l M) users without replacement; every
selected user runs K local steps on fresh floor(s R) batches of its train
shard, clipping per-example gradients and adding Gaussian noise scaled to
the query sensitivity, with an optional control-variate drift correction.
The server averages the returned deltas.  All randomness flows through
keyed streams, so traces are reproducible and schedule-independent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics, rngstream


class Algorithm(str, enum.Enum):
    DP_SCAFFOLD = "dp-scaffold"
    DP_SCAFFOLD_WARM = "dp-scaffold-warm"
    DP_FEDAVG = "dp-fedavg"
    DP_FEDSGD = "dp-fedsgd"
    SCAFFOLD = "scaffold"
    SCAFFOLD_WARM = "scaffold-warm"
    FEDAVG = "fedavg"
    FEDSGD = "fedsgd"

    @property
    def private(self) -> bool:
        return self.value.startswith("dp-")

    @property
    def scaffold_family(self) -> bool:
        return "scaffold" in self.value

    @property
    def warm(self) -> bool:
        return self.value.endswith("-warm")

    @property
    def fedsgd(self) -> bool:
        return "fedsgd" in self.value


CLIP_FIXED = "fixed"
CLIP_MEDIAN = "median"
SENS_RECORD = "record"
SENS_USER = "user"


@dataclass
class TrainConfig:
    algorithm: Algorithm
    rounds: int
    local_steps: int
    user_ratio: float
    data_ratio: float
    eta0: float
    eta_g: float = 1.0
    sigma_g: float = 0.0
    clip_mode: str = CLIP_FIXED
    clip_c: float = math.inf  # threshold (fixed mode) or initial C0 (median mode)
    sensitivity: str = SENS_RECORD
    l2_reg: float = 0.0
    seed: int = 0

    @property
    def eta_l(self) -> float:
        return self.eta0 / (self.data_ratio * self.local_steps)

    def validate(self, n_users: int, train_records: int):
        if not 0.0 < self.user_ratio <= 1.0 or not 0.0 < self.data_ratio <= 1.0:
            raise ValueError("sampling ratios must lie in (0, 1]")
        if int(self.user_ratio * n_users) < 1:
            raise ValueError("floor(l M) must be at least 1")
        if int(self.data_ratio * train_records) < 1:
            raise ValueError("floor(s R) must be at least 1")
        if self.rounds < 0 or self.local_steps < 1:
            raise ValueError("invalid round/local-step counts")
        if self.clip_mode not in (CLIP_FIXED, CLIP_MEDIAN):
            raise ValueError(f"unknown clip mode {self.clip_mode}")
        if self.sensitivity not in (SENS_RECORD, SENS_USER):
            raise ValueError(f"unknown sensitivity mode {self.sensitivity}")
        if self.algorithm.fedsgd and abs(self.local_steps * self.data_ratio - 1.0) > 1e-9:
            raise ValueError("FedSGD requires K * s = 1")
        if not self.algorithm.private:
            if self.sigma_g != 0.0:
                raise ValueError("non-private algorithms require sigma_g = 0")
            if self.clip_mode != CLIP_FIXED or not math.isinf(self.clip_c):
                raise ValueError("non-private algorithms run with clipping disabled")

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class ServerState:
    x: np.ndarray
    c: np.ndarray
    round: int = 0
    clip_c: float = math.inf


@dataclass
class RoundDelta:
    dy: np.ndarray
    dc: np.ndarray


@dataclass
class Trace:
    rows: list[metrics.RoundMetrics]
    final_params: np.ndarray
    server_control: np.ndarray
    user_controls: np.ndarray
    warm_rounds: int


def clip(g: np.ndarray, threshold: float) -> np.ndarray:
    """Rescale g onto the l2 ball of the given radius (identity within it)."""
    if threshold <= 0.0:
        raise ValueError("clip threshold must be positive")
    if math.isinf(threshold):
        return g
    norm = float(np.linalg.norm(g))
    return g / max(1.0, norm / threshold)


def noise_scale(clip_c: float, batch_size: int, data_ratio: float, sensitivity: str) -> float:
    """l2 sensitivity of the batch mean: 2C/(sR) per record, 2C/s per user."""
    if sensitivity == SENS_RECORD:
        return 2.0 * clip_c / batch_size
    return 2.0 * clip_c / data_ratio


def noisy_batch_gradient(
    model,
    params: np.ndarray,
    batch_X: np.ndarray,
    batch_y: np.ndarray,
    clip_c: float,
    sigma_g: float,
    sensitivity: str,
    data_ratio: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
):
    """Mean clipped per-example gradient plus calibrated Gaussian noise.

    The l2-regularization gradient is data-independent, so it is added after
    clipping and noising, keeping the query sensitivity exact.  Returns
    (gradient, unclipped per-example norms).
    """
    if len(batch_y) == 0:
        raise ValueError("empty batch")
    gsum, norms = model.clipped_grad_sum(params, batch_X, batch_y, clip_c)
    g = gsum / len(batch_y)
    if sigma_g > 0.0:
        if math.isinf(clip_c):
            raise ValueError("noise calibration requires a finite clip threshold")
        if noise is None:
            noise = rng.standard_normal(g.shape)
        g = g + noise_scale(clip_c, len(batch_y), data_ratio, sensitivity) * sigma_g * noise
    return g + model.reg_grad(params), norms


def local_round(user_id: int, server: ServerState, user_controls: np.ndarray, cfg: TrainConfig, data, model):
    """K local steps for one selected user; returns (RoundDelta, norms).

    SCAFFOLD-family updates follow y <- y - eta_l (H~ - c_i + c); the FedAvg
    family has no drift correction and reports a zero control delta.
    """
    X, y_labels = data.user_train(user_id)
    n_records = len(y_labels)
    batch_size = int(cfg.data_ratio * n_records)
    t = server.round + 1
    batch_rng = rngstream.stream(cfg.seed, rngstream.BATCH, t, user_id)
    noise = None
    if cfg.sigma_g > 0.0:
        noise = rngstream.stream(cfg.seed, rngstream.NOISE, t, user_id).standard_normal(
            (cfg.local_steps, model.dim)
        )
    correction = None
    if cfg.algorithm.scaffold_family:
        correction = server.c - user_controls[user_id]

    y_local = server.x.copy()
    eta_l = cfg.eta_l
    norms_all = np.empty(cfg.local_steps * batch_size)
    for k in range(cfg.local_steps):
        idx = batch_rng.choice(n_records, size=batch_size, replace=False)
        g, norms = noisy_batch_gradient(
            model,
            y_local,
            X[idx],
            y_labels[idx],
            server.clip_c,
            cfg.sigma_g,
            cfg.sensitivity,
            cfg.data_ratio,
            noise=None if noise is None else noise[k],
        )
        if correction is not None:
            g = g + correction
        y_local = y_local - eta_l * g
        norms_all[k * batch_size : (k + 1) * batch_size] = norms

    dy = y_local - server.x
    if cfg.algorithm.scaffold_family:
        c_tilde = user_controls[user_id] - server.c + (server.x - y_local) / (
            cfg.local_steps * eta_l
        )
        dc = c_tilde - user_controls[user_id]
    else:
        dc = np.zeros_like(dy)
    return RoundDelta(dy, dc), norms_all


def aggregate(server: ServerState, deltas: list[RoundDelta], cfg: TrainConfig, n_users: int) -> ServerState:
    """Average deltas over l M, step the model by eta_g and the control by l."""
    dim = server.x.shape[0]
    for d in deltas:
        if d.dy.shape != (dim,) or d.dc.shape != (dim,):
            raise ValueError("delta dimension mismatch")
    inv = 1.0 / (cfg.user_ratio * n_users)
    dx = inv * np.sum([d.dy for d in deltas], axis=0)
    x = server.x + cfg.eta_g * dx
    c = server.c
    if cfg.algorithm.scaffold_family:
        dc = inv * np.sum([d.dc for d in deltas], axis=0)
        c = server.c + cfg.user_ratio * dc
    return ServerState(x, c, server.round + 1, server.clip_c)


def warm_start(server: ServerState, user_controls: np.ndarray, cfg: TrainConfig, data, model) -> int:
    """Initialize control variates with the global model frozen.

    Runs ceil(4/l) rounds of l-subsampled selection; each selected user sets
    its variate to the average of K noised stochastic gradients at the
    initial model (re-selection overwrites).  Users never selected keep a
    zero variate.  The server control becomes the mean over all users.
    Returns the number of rounds consumed, for budget accounting.
    """
    n_users = data.n_users
    n_sel = int(cfg.user_ratio * n_users)
    n_warm = math.ceil(4.0 / cfg.user_ratio)
    for w in range(n_warm):
        sel = rngstream.stream(cfg.seed, rngstream.WARM_SELECT, w).choice(
            n_users, size=n_sel, replace=False
        )
        for uid in sel:
            X, y_labels = data.user_train(int(uid))
            n_records = len(y_labels)
            batch_size = int(cfg.data_ratio * n_records)
            batch_rng = rngstream.stream(cfg.seed, rngstream.WARM_BATCH, w, int(uid))
            noise = None
            if cfg.sigma_g > 0.0:
                noise = rngstream.stream(
                    cfg.seed, rngstream.WARM_NOISE, w, int(uid)
                ).standard_normal((cfg.local_steps, model.dim))
            acc = np.zeros(model.dim)
            for k in range(cfg.local_steps):
                idx = batch_rng.choice(n_records, size=batch_size, replace=False)
                g, _ = noisy_batch_gradient(
                    model,
                    server.x,
                    X[idx],
                    y_labels[idx],
                    server.clip_c,
                    cfg.sigma_g,
                    cfg.sensitivity,
                    cfg.data_ratio,
                    noise=None if noise is None else noise[k],
                )
                acc += g
            user_controls[int(uid)] = acc / cfg.local_steps
    server.c = user_controls.mean(axis=0)
    return n_warm


def run(
    cfg: TrainConfig,
    data,
    model,
    reference_loss: float | None = None,
    eps_schedule=None,
    record_metrics: bool = True,
    round_hook=None,
) -> Trace:
    """Warm start (if configured) followed by T federated rounds.

    eps_schedule maps the 1-based round index to the privacy spent so far;
    round_hook(server, user_controls) runs after each aggregation, before
    metrics, and may mutate state.
    """
    cfg.validate(data.n_users, data.train_records_per_user)
    dim = model.dim
    x0 = model.init_params(rngstream.stream(cfg.seed, rngstream.INIT))
    clip0 = cfg.clip_c if cfg.algorithm.private else math.inf
    server = ServerState(x0, np.zeros(dim), 0, clip0)
    user_controls = np.zeros((data.n_users, dim))

    warm_used = 0
    if cfg.algorithm.warm:
        warm_used = warm_start(server, user_controls, cfg, data, model)

    n_sel = int(cfg.user_ratio * data.n_users)
    rows = []
    for t in range(1, cfg.rounds + 1):
        sel = rngstream.stream(cfg.seed, rngstream.SELECT, t).choice(
            data.n_users, size=n_sel, replace=False
        )
        deltas = []
        round_norms = []
        for uid in sel:
            delta, norms = local_round(int(uid), server, user_controls, cfg, data, model)
            deltas.append(delta)
            round_norms.append(norms)
        if cfg.algorithm.scaffold_family:
            for uid, delta in zip(sel, deltas):
                user_controls[int(uid)] += delta.dc
        server = aggregate(server, deltas, cfg, data.n_users)
        if cfg.clip_mode == CLIP_MEDIAN:
            server.clip_c = float(np.median(np.concatenate(round_norms)))
        if round_hook is not None:
            round_hook(server, user_controls)
        if record_metrics:
            eps = eps_schedule(t) if eps_schedule is not None else math.inf
            rows.append(
                metrics.compute_round_metrics(
                    t, model, server.x, data, reference_loss, eps, server.clip_c
                )
            )
    return Trace(rows, server.x, server.c, user_controls, warm_used)
