"""Sample-size control and greedy coverage on MT-RR collections.

Bounds follow the OPIM-C recipe. The per-set estimator summands are scaled by
the task quality mass ``c_j``, so every concentration bound is applied to the
normalized estimator ``f_hat / c_max`` (summands in ``[0, 1]``) and the result
is scaled back.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .diffusion import Claims
from .graph import TaskGraph
from .sampling import CoverageState, MtRrSampler, RrCollection

ONE_MINUS_INV_E = 1.0 - 1.0 / math.e
MIN_THETA0 = 32


class InfeasibleBudgetError(ValueError):
    """No registered user can be afforded under the budget."""


def ln_binomial(n: int, k: int) -> float:
    """``ln C(n, k)`` via log-gamma."""
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def compute_K(bids: Sequence[float], budget: float) -> int:
    """Largest number of bids whose sum fits the budget (cheapest first)."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    b = np.sort(np.asarray(bids, dtype=float))
    if b.size == 0:
        raise ValueError("no bids")
    if b[0] > budget:
        raise InfeasibleBudgetError(f"cheapest bid {b[0]} exceeds budget {budget}")
    return int(np.searchsorted(np.cumsum(b), budget, side="right"))


def theta_max(n_registered: int, K: int, eps: float, delta: float, scale: float = 1.0) -> float:
    """Round cap of the doubling schedule.

    With ``scale=1`` this is the bare formula; the OPIM-C derivation it comes
    from carries a factor ``n`` (the optimum is at least ``K/n`` of the
    normalized maximum), which ``scale`` restores.
    """
    a = ONE_MINUS_INV_E * math.sqrt(math.log(6.0 / delta))
    b = math.sqrt(ONE_MINUS_INV_E * (ln_binomial(n_registered, K) + math.log(6.0 / delta)))
    return 2.0 * scale * (a + b) ** 2 / (eps**2 * K)


@dataclass(frozen=True)
class OpimcParams:
    n_registered: int
    K: int
    eps: float
    delta: float
    min_theta0: int = MIN_THETA0
    scale: float = 1.0

    def __post_init__(self):
        if not (0 < self.eps < 1 and 0 < self.delta < 1):
            raise ValueError("eps and delta must lie in (0, 1)")
        if not self.scale >= 1:
            raise ValueError("scale must be >= 1")
        if not 1 <= self.K <= self.n_registered:
            raise ValueError(f"need 1 <= K <= n_registered, got K={self.K}")

    @property
    def theta_max(self) -> float:
        return theta_max(self.n_registered, self.K, self.eps, self.delta, self.scale)

    @property
    def raw_theta0(self) -> float:
        return self.theta_max * self.eps**2 * self.K / self.scale

    @property
    def theta0(self) -> int:
        return max(math.ceil(self.raw_theta0), self.min_theta0)

    @property
    def i_max(self) -> int:
        """``ceil(log2(theta_max / theta0))`` (at least 1), exactly.

        The ratio is ``scale / (eps^2 K)``; it is evaluated on the decimal values
        of the inputs so that exact powers of two (``eps=0.1, K=25``) do not
        round up.
        """
        ratio = Fraction(repr(float(self.scale))) / (Fraction(repr(float(self.eps))) ** 2 * self.K)
        i = 0
        while ratio > 2**i:
            i += 1
        return max(1, i)

    @property
    def delta_round(self) -> float:
        """``delta_l = delta_u``, the per-round failure budget."""
        return self.delta / (3 * self.i_max)

    def theta_at(self, i: int) -> int:
        """Collection size in round ``i`` (0-based)."""
        return min(self.theta0 * 2**i, max(self.theta0, math.ceil(self.theta_max)))


def lower_bound(f_hat_norm: float, theta: int, delta_l: float) -> float:
    """High-probability lower bound on a normalized objective value."""
    if theta < 1:
        raise ValueError("theta must be >= 1")
    eta = math.log(1.0 / delta_l)
    inner = math.sqrt(f_hat_norm * theta + 2.0 * eta / 9.0) - math.sqrt(eta / 2.0)
    val = inner * inner - eta / 18.0
    if inner < 0 or val < 0:
        return 0.0
    return val / theta


def upper_bound(f_prime_norm: float, theta: int, delta_u: float) -> float:
    """High-probability upper bound on the normalized optimum from its greedy certificate."""
    if theta < 1:
        raise ValueError("theta must be >= 1")
    eta = math.log(1.0 / delta_u)
    return (math.sqrt(f_prime_norm * theta + eta / 2.0) + math.sqrt(eta / 2.0)) ** 2 / theta


@dataclass
class CoverageResult:
    seeds: list[int]
    gains: list[float]
    value: float
    upper: float = math.inf
    """``min_a f_hat(S_a) + sum of top-K marginals`` certificate (size-K greedy only)."""


def _argmax_lowest(values: np.ndarray) -> int:
    return int(np.argmax(values))


def _sorted_users(users: Sequence[int]) -> np.ndarray:
    u = np.asarray(sorted(set(int(x) for x in users)), dtype=np.int64)
    if u.size == 0:
        raise ValueError("no registered users")
    return u


def weighted_max_coverage(collection: RrCollection, users: Sequence[int], claims: Claims, K: int) -> CoverageResult:
    """Size-``K`` greedy on ``f_hat`` with lowest-id tie-breaking.

    Also returns the upper certificate on the size-``K`` optimum of ``f_hat``.
    """
    users = _sorted_users(users)
    K = min(K, users.size)
    state = CoverageState(collection, users, claims)
    seeds, gains = [], []
    upper = math.inf
    for a in range(K + 1):
        g = state.gains()
        g[state.chosen] = -np.inf
        top = np.partition(np.where(np.isfinite(g), g, 0.0), users.size - K)[users.size - K :]
        upper = min(upper, state.value + float(np.sum(top)))
        if a == K:
            break
        k = _argmax_lowest(g)
        seeds.append(int(users[k]))
        gains.append(float(g[k]))
        state.add(k)
    return CoverageResult(seeds, gains, state.value, upper)


def budgeted_w_max_coverage(
    collection: RrCollection,
    users: Sequence[int],
    claims: Claims,
    bids: Mapping[int, float],
    budget: float,
    compare_singleton: bool = True,
    ratio_bids: Mapping[int, float] | None = None,
) -> CoverageResult:
    """Gain-per-bid greedy that stops at the first candidate exceeding the budget.

    Candidates with zero marginal gain are never added. With
    ``compare_singleton`` the best affordable single user is returned instead
    when its value is strictly larger. ``ratio_bids`` replaces the bids in the
    selection ratio only; the budget is always charged the real bids.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    users = _sorted_users(users)
    b = np.array([float(bids[v]) for v in users.tolist()])
    if b.min() > budget:
        raise InfeasibleBudgetError(f"no registered user affordable under budget {budget}")
    rb = b if ratio_bids is None else np.array([float(ratio_bids[v]) for v in users.tolist()])
    state = CoverageState(collection, users, claims)
    single = state.gains()
    seeds, gains, spent = [], [], 0.0
    while len(seeds) < users.size:
        g = state.gains()
        ratio = np.where(state.chosen, -np.inf, g / rb)
        k = _argmax_lowest(ratio)
        if not g[k] > 0:
            break
        if spent + b[k] > budget:
            break
        seeds.append(int(users[k]))
        gains.append(float(g[k]))
        spent += b[k]
        state.add(k)
    result = CoverageResult(seeds, gains, state.value)
    if compare_singleton:
        afford = np.where(b <= budget, single, -np.inf)
        k = _argmax_lowest(afford)
        if single[k] > result.value:
            return CoverageResult([int(users[k])], [float(single[k])], float(single[k]))
    return result


@dataclass
class RoundLog:
    round: int
    theta: int
    f_hat: float
    f_low: float
    f_up: float
    ratio: float
    ms: float


@dataclass
class OpimcResult:
    collection: RrCollection
    seeds: list[int]
    params: OpimcParams
    rounds: list[RoundLog] = field(default_factory=list)
    check: RrCollection | None = None
    """The independent second collection; unbiased for any set chosen on ``collection``."""

    @property
    def stopped_early(self) -> bool:
        return self.rounds[-1].ratio >= ONE_MINUS_INV_E - self.params.eps


def modified_opimc(
    graph: TaskGraph,
    users: Sequence[int],
    claims: Claims,
    K: int,
    eps: float = 0.1,
    delta: float = 0.01,
    seed: int = 0,
    min_theta0: int = MIN_THETA0,
    scale_by_nodes: bool = True,
) -> OpimcResult:
    """Doubling schedule over paired collections until the greedy certificate is tight.

    The greedy runs on the first collection, which also yields the upper bound
    on the optimum; the lower bound for the greedy set comes from the second,
    independent collection. Returns the first collection.

    ``scale_by_nodes`` multiplies the round cap by the node count (see
    ``theta_max``); without it the cap is the bare formula, which on graphs of
    a few thousand nodes stops at a few hundred sets.
    """
    users = _sorted_users(users)
    scale = float(graph.node_count) if scale_by_nodes else 1.0
    params = OpimcParams(int(users.size), min(K, users.size), eps, delta, min_theta0, scale)
    sampler = MtRrSampler(graph)
    ss = np.random.SeedSequence(seed)
    s1, s2 = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    r1 = RrCollection.for_graph(graph, s1)
    r2 = RrCollection.for_graph(graph, s2)
    d = params.delta_round
    c_max = float(np.max(r1.scale))
    logs: list[RoundLog] = []
    seeds: list[int] = []
    for i in range(params.i_max):
        t0 = time.perf_counter()
        theta = params.theta_at(i)
        r1.extend(theta, graph, sampler)
        r2.extend(theta, graph, sampler)
        cov = weighted_max_coverage(r1, users, claims, params.K)
        seeds = cov.seeds
        f2 = r2.estimate(seeds, claims)
        f_low = lower_bound(f2 / c_max, r2.theta, d) * c_max
        f_up = upper_bound(cov.upper / c_max, r1.theta, d) * c_max
        ratio = f_low / f_up if f_up > 0 else 0.0
        logs.append(RoundLog(i + 1, theta, cov.value, f_low, f_up, ratio, (time.perf_counter() - t0) * 1e3))
        if ratio >= ONE_MINUS_INV_E - eps:
            break
    return OpimcResult(r1, seeds, params, logs, r2)
