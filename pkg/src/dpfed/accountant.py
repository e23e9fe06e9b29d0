"""Renyi-DP accounting for the two-level subsampled Gaussian pipeline.

One federated round runs K data-subsampled noisy gradient steps on each of
the selected users; rounds themselves subsample users.  The accountant
tracks an RDP curve (Renyi order -> epsilon bound) through data
subsampling, K-fold composition, user-level amplification and T-fold
composition, then converts to an (eps, delta)-DP statement by optimizing
the order.  A looser closed-form path through strong adaptive composition
is provided as a cross-check.

All binomial sums are evaluated in log space so large orders do not
overflow.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)

# Integer Renyi orders tabulated by every curve.  Real orders in between are
# reached through the CGF convexity bound (see rdp_at_real_order).
ORDER_MIN = 2
ORDER_MAX = 256
INT_ORDERS = np.arange(ORDER_MIN, ORDER_MAX + 1)


class AccountantOverflow(OverflowError):
    """Raised when even the log-space evaluation leaves the finite range."""


def _log_comb(n: float, j: float) -> float:
    return math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)


def _logsumexp(vals: list[float]) -> float:
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in vals))


def rdp_gaussian(alpha: float, sigma2: float) -> float:
    """RDP bound alpha / (2 sigma^2) of the unit-sensitivity Gaussian."""
    if alpha <= 1.0:
        raise ValueError(f"Renyi order must exceed 1, got {alpha}")
    if sigma2 <= 0.0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    return alpha / (2.0 * sigma2)


def rdp_subsampled_gaussian(alpha: int, q: float, sigma2: float) -> float:
    """RDP bound at integer order for a q-subsampled unit Gaussian query.

    Evaluates
        (1/(a-1)) log(1 + 2 q^2 C(a,2) min{2(e^{1/s2}-1), e^{1/s2}}
                        + sum_{j=3..a} 2 q^j C(a,j) e^{j(j-1)/(2 s2)})
    with the sum done through log-sum-exp.
    """
    if int(alpha) != alpha or alpha < 2:
        raise ValueError(f"integer order >= 2 required, got {alpha}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"sampling ratio must lie in [0, 1], got {q}")
    if sigma2 <= 0.0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    if q == 0.0:
        return 0.0
    alpha = int(alpha)
    x = 1.0 / sigma2
    # min{2(e^x - 1), e^x}: the first branch wins exactly when x <= ln 2.
    log_min = math.log(2.0 * math.expm1(x)) if x <= LN2 else x
    logq = math.log(q)
    terms = [LN2 + 2.0 * logq + _log_comb(alpha, 2) + log_min]
    for j in range(3, alpha + 1):
        terms.append(LN2 + j * logq + _log_comb(alpha, j) + j * (j - 1) / (2.0 * sigma2))
    total = _logsumexp([0.0] + terms)
    eps = total / (alpha - 1)
    if not math.isfinite(eps):
        raise AccountantOverflow(
            f"subsampled-Gaussian bound overflowed at alpha={alpha}, q={q}, sigma2={sigma2}"
        )
    return eps


@dataclass
class RdpCurve:
    """RDP epsilon bounds tabulated on a strictly increasing grid of orders.

    base_eps/count record how a composed curve was built so that chained
    compositions multiply counts exactly (float products do not associate).
    """

    orders: np.ndarray
    eps: np.ndarray
    base_eps: np.ndarray | None = field(default=None, repr=False, compare=False)
    count: int = field(default=1, repr=False, compare=False)

    def __post_init__(self):
        self.orders = np.asarray(self.orders, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)
        if self.orders.shape != self.eps.shape:
            raise ValueError("orders and eps must have matching shapes")
        if np.any(self.orders <= 1.0):
            raise ValueError("all orders must exceed 1")
        if np.any(np.diff(self.orders) <= 0):
            raise ValueError("orders must be strictly increasing")
        if np.any(self.eps < 0):
            raise ValueError("RDP epsilon values must be nonnegative")
        if self.base_eps is None:
            self.base_eps = self.eps

    def at(self, alpha: float) -> float:
        """Evaluate at a real order via the CGF convexity rule."""
        return rdp_at_real_order(self, alpha)


def gaussian_curve(sigma2: float, orders: np.ndarray = INT_ORDERS) -> RdpCurve:
    return RdpCurve(orders.astype(float), np.asarray(orders, dtype=float) / (2.0 * sigma2))


def subsampled_gaussian_curve(q: float, sigma2: float) -> RdpCurve:
    eps = np.array([rdp_subsampled_gaussian(a, q, sigma2) for a in INT_ORDERS])
    return RdpCurve(INT_ORDERS.astype(float), eps)


def rdp_at_real_order(curve: RdpCurve, alpha: float) -> float:
    """CGF linear-interpolation bound at real alpha > 1.

    The CGF K(lambda) = lambda * eps(lambda + 1) is convex with K(0) = 0, so
    for floor(alpha) < 2 the lower endpoint contributes nothing.
    """
    if alpha <= 1.0:
        raise ValueError(f"Renyi order must exceed 1, got {alpha}")
    orders, eps = curve.orders, curve.eps
    lo_order = math.floor(alpha)
    hi_order = math.ceil(alpha)
    if lo_order == alpha:
        idx = np.searchsorted(orders, alpha)
        if idx < len(orders) and orders[idx] == alpha:
            return float(eps[idx])
    if hi_order > orders[-1]:
        raise ValueError(f"order {alpha} beyond tabulated grid (max {orders[-1]})")

    def tabulated(o: int) -> float:
        idx = np.searchsorted(orders, float(o))
        if idx >= len(orders) or orders[idx] != o:
            raise ValueError(f"integer order {o} not tabulated")
        return float(eps[idx])

    lo_cgf = 0.0 if lo_order < ORDER_MIN else (lo_order - 1) * tabulated(lo_order)
    hi_cgf = (hi_order - 1) * tabulated(hi_order)
    return ((1.0 - alpha + lo_order) * lo_cgf + (alpha - lo_order) * hi_cgf) / (alpha - 1.0)


def compose(curve: RdpCurve, n: int) -> RdpCurve:
    """n-fold adaptive composition: pointwise n * eps (exactly additive)."""
    if n < 0:
        raise ValueError("composition count must be nonnegative")
    total = curve.count * n
    return RdpCurve(curve.orders.copy(), total * curve.base_eps, curve.base_eps, total)


def subsample_generic(curve: RdpCurve, q: float) -> RdpCurve:
    """Amplification by q-subsampling for a generic RDP mechanism.

    Uses the general-mechanism binomial bound with the pure-DP terms taken at
    their mechanism-agnostic cap 2 (the inner mechanism has no finite
    eps(infinity)):
        eps'(a) <= (1/(a-1)) log(1 + q^2 C(a,2) min{4(e^{eps(2)}-1), 2 e^{eps(2)}}
                                + sum_{j=3..a} 2 q^j C(a,j) e^{(j-1) eps(j)})
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"sampling ratio must lie in [0, 1], got {q}")
    if not np.array_equal(curve.orders, INT_ORDERS.astype(float)):
        raise ValueError("subsample_generic expects the integer-order grid")
    if not np.all(np.isfinite(curve.eps)):
        raise AccountantOverflow("input curve has non-finite values")
    if q == 0.0:
        return RdpCurve(curve.orders.copy(), np.zeros_like(curve.eps))
    eps = curve.eps
    e2 = eps[0]
    log_min = math.log(4.0 * math.expm1(e2)) if e2 <= LN2 else LN2 + e2
    logq = math.log(q)
    out = np.empty_like(eps)
    for i, a in enumerate(INT_ORDERS):
        terms = [2.0 * logq + _log_comb(a, 2) + log_min]
        for j in range(3, a + 1):
            terms.append(LN2 + j * logq + _log_comb(a, j) + (j - 1) * eps[j - ORDER_MIN])
        out[i] = _logsumexp([0.0] + terms) / (a - 1)
    if not np.all(np.isfinite(out)):
        raise AccountantOverflow("amplified curve overflowed log-space evaluation")
    return RdpCurve(curve.orders.copy(), out)


def rdp_to_dp(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """Smallest eps with (eps, delta)-DP implied by the curve.

    Scans the tabulated grid, then golden-section refines between the best
    integer order's neighbors using the real-order interpolation.
    Returns (eps, best_alpha); (inf, nan) if the curve is infinite everywhere.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log_inv_delta = math.log(1.0 / delta)
    vals = curve.eps + log_inv_delta / (curve.orders - 1.0)
    finite = np.isfinite(vals)
    if not finite.any():
        return math.inf, math.nan
    idx = int(np.argmin(np.where(finite, vals, np.inf)))
    best_eps = float(vals[idx])
    best_alpha = float(curve.orders[idx])

    lo = max(1.0 + 1e-9, best_alpha - 1.0)
    hi = min(float(curve.orders[-1]), best_alpha + 1.0)

    def objective(a: float) -> float:
        return rdp_at_real_order(curve, a) + log_inv_delta / (a - 1.0)

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(80):
        c = hi - inv_phi * (hi - lo)
        d = lo + inv_phi * (hi - lo)
        if objective(c) < objective(d):
            hi = d
        else:
            lo = c
    mid = 0.5 * (lo + hi)
    refined = objective(mid)
    if refined < best_eps:
        best_eps, best_alpha = refined, mid
    return best_eps, best_alpha


class PrivacyPath(str, enum.Enum):
    RDP_PATH = "rdp"
    DP_PATH = "dp"


@dataclass
class MechanismParams:
    """Inputs of the privacy pipeline (noise multiplier is unitless)."""

    sigma_g: float
    K: int
    T: int
    l: float
    s: float
    M: int
    R: int
    delta: float

    def __post_init__(self):
        if not 0.0 < self.l <= 1.0:
            raise ValueError(f"user sampling ratio must lie in (0, 1], got {self.l}")
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"data sampling ratio must lie in (0, 1], got {self.s}")
        if self.sigma_g < 0.0:
            raise ValueError(f"noise multiplier must be nonnegative, got {self.sigma_g}")
        for name in ("K", "T", "M", "R"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def replace(self, **kw) -> "MechanismParams":
        d = self.__dict__.copy()
        d.update(kw)
        return MechanismParams(**d)


@dataclass
class PrivacyReport:
    eps_third_party: float
    eps_server: float
    delta: float
    delta_server: float
    best_alpha: float
    path: PrivacyPath
    warm_rounds: int = 0

    def to_dict(self) -> dict:
        def jsonable(x):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "eps_third_party": jsonable(self.eps_third_party),
            "eps_server": jsonable(self.eps_server),
            "delta": self.delta,
            "delta_server": self.delta_server,
            "best_alpha": jsonable(self.best_alpha),
            "path": self.path.value,
            "warm_rounds": self.warm_rounds,
        }


def third_party_round_curve(p: MechanismParams) -> RdpCurve:
    """Amplified RDP curve of one round as seen by a third party.

    Aggregation over floor(lM) users both shrinks the sensitivity and
    averages independent noises, so each local step behaves like an
    s-subsampled Gaussian with variance lM sigma_g^2; K steps compose, and
    user subsampling amplifies the per-round mechanism by l.
    """
    if p.sigma_g <= 0.0:
        raise ValueError("third-party accounting requires sigma_g > 0")
    per_step = subsampled_gaussian_curve(p.s, p.l * p.M * p.sigma_g**2)
    return subsample_generic(compose(per_step, p.K), p.l)


def server_round_curve(p: MechanismParams) -> RdpCurve:
    """Per-round curve toward the server: it sees individual contributions
    (no aggregation variance reduction) and knows the selected users (no
    user-sampling amplification)."""
    if p.sigma_g <= 0.0:
        raise ValueError("server accounting requires sigma_g > 0")
    per_step = subsampled_gaussian_curve(p.s, p.sigma_g**2)
    return compose(per_step, p.K)


def _convert(round_curve: RdpCurve, rounds: int, delta: float) -> tuple[float, float]:
    return rdp_to_dp(compose(round_curve, rounds), delta)


def third_party_report(p: MechanismParams, warm_rounds: int = 0) -> PrivacyReport:
    """Full report with best_alpha taken from the third-party conversion.

    Warm-start rounds leak exactly like ordinary rounds, so they are counted
    in the composition.
    """
    rounds = p.T + warm_rounds
    eps3, alpha3 = _convert(third_party_round_curve(p), rounds, p.delta)
    eps_s, _ = _convert(server_round_curve(p), rounds, p.delta)
    return PrivacyReport(eps3, eps_s, p.delta, p.delta, alpha3, PrivacyPath.RDP_PATH, warm_rounds)


def server_report(p: MechanismParams, warm_rounds: int = 0) -> PrivacyReport:
    """Like third_party_report but best_alpha optimizes the server bound."""
    rounds = p.T + warm_rounds
    eps3, _ = _convert(third_party_round_curve(p), rounds, p.delta)
    eps_s, alpha_s = _convert(server_round_curve(p), rounds, p.delta)
    return PrivacyReport(eps3, eps_s, p.delta, p.delta, alpha_s, PrivacyPath.RDP_PATH, warm_rounds)


def _strong_composition_eps(eps_star: float, T: int, log_inv_dpp: float) -> float:
    """Strong adaptive composition: e sqrt(2T log(1/d'')) + T e (e^e - 1)."""
    if eps_star > 350.0:  # e^eps overflows well before this matters
        return math.inf
    return eps_star * math.sqrt(2.0 * T * log_inv_dpp) + T * eps_star * math.expm1(eps_star)


_X_GRID = np.linspace(0.01, 0.99, 99)


def dp_path_report(p: MechanismParams) -> PrivacyReport:
    """Cross-check bound through classical (eps, delta)-DP tools.

    Per round, the K-composed data-subsampled RDP curve is converted to DP
    with budget delta' = x delta / (T l), amplified by user subsampling, then
    strong-composed over T rounds with the remaining (1 - x) delta.  The
    report minimizes over the order grid and a 99-point grid of the split x.
    This path is looser than the RDP path in practice.
    """
    if p.sigma_g <= 0.0:
        raise ValueError("dp-path accounting requires sigma_g > 0")
    data_curve = compose(subsampled_gaussian_curve(p.s, p.l * p.M * p.sigma_g**2), p.K)
    server_curve = compose(subsampled_gaussian_curve(p.s, p.sigma_g**2), p.K)

    def optimize(curve: RdpCurve, amplify: bool):
        # delta' = x delta / (T l) is fixed by the third-party calibration;
        # the server-side guarantee reuses the same split, so its total
        # failure probability T delta' + delta'' exceeds delta by the 1/l
        # factor in the first term.
        best = (math.inf, math.nan, math.nan)
        for x in _X_GRID:
            dprime = x * p.delta / (p.T * p.l)
            log_inv_dprime = math.log(1.0 / dprime)
            log_inv_dpp = math.log(1.0 / ((1.0 - x) * p.delta))
            for a_idx, a in enumerate(curve.orders):
                eps_a = curve.eps[a_idx] + log_inv_dprime / (a - 1.0)
                if amplify:
                    # log(1 + l (e^{eps_a} - 1)), overflow-safe
                    if eps_a > 350.0:
                        eps_star = math.log(p.l) + eps_a
                    else:
                        eps_star = math.log1p(p.l * math.expm1(eps_a))
                else:
                    eps_star = eps_a
                total = _strong_composition_eps(eps_star, p.T, log_inv_dpp)
                if total < best[0]:
                    best = (total, float(a), float(x))
        return best

    eps3, alpha3, _ = optimize(data_curve, True)
    eps_s, _, x_s = optimize(server_curve, False)
    if math.isfinite(eps_s):
        delta_server = x_s * p.delta / p.l + (1.0 - x_s) * p.delta
    else:
        delta_server = p.delta
    return PrivacyReport(eps3, eps_s, p.delta, delta_server, alpha3, PrivacyPath.DP_PATH)


def max_rounds(budget_eps: float, p: MechanismParams, warm_rounds: int = 0) -> int:
    """Largest T whose third-party eps stays within budget_eps.

    eps is nondecreasing in T, so exponential growth followed by bisection
    brackets the boundary.  Returns 0 if even a single round exceeds the
    budget.  The T field of p is ignored.
    """
    round_curve = third_party_round_curve(p)

    def eps_at(T: int) -> float:
        return rdp_to_dp(compose(round_curve, T + warm_rounds), p.delta)[0]

    if eps_at(1) > budget_eps:
        return 0
    hi = 1
    while eps_at(hi) <= budget_eps:
        hi *= 2
        if hi > 10**8:
            raise AccountantOverflow("budget admits more than 1e8 rounds; aborting search")
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if eps_at(mid) <= budget_eps:
            lo = mid
        else:
            hi = mid
    return lo


def asymptotic_sigma(eps: float, delta: float, T: int, K: int, l: float, s: float, M: int) -> float:
    """Closed-form noise scale s sqrt(l T K log(2Tl/d) log(2/d)) / (eps sqrt(M)).

    Order-of-magnitude only (constants omitted); exposed for documentation
    and sanity plots, not used for calibration.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    return s * math.sqrt(l * T * K * math.log(2.0 * T * l / delta) * math.log(2.0 / delta)) / (
        eps * math.sqrt(M)
    )
