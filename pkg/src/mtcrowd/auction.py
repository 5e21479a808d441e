"""Budgeted reverse auction: greedy winner selection and critical payments.

Winners are picked by estimator gain per unit bid until the first pick that
would overflow the budget. Each winner is paid its critical bid, the largest
bid with which it would still have been selected, found by replaying the
greedy over everybody else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .diffusion import Claims
from .sampling import CoverageState, RrCollection

PAYMENT_RULES = ("critical", "uncapped")


@dataclass(frozen=True)
class BidProfile:
    """Public bidding information: claimed task sets and bids.

    Private costs are deliberately not part of this type; the mechanism never
    sees them.
    """

    users: tuple[int, ...]
    claims: Mapping[int, frozenset[int]]
    bids: Mapping[int, float]

    def __post_init__(self):
        users = tuple(sorted(set(self.users)))
        if not users:
            raise ValueError("bid profile has no users")
        for v in users:
            if not self.bids[v] > 0:
                raise ValueError(f"bid of user {v} must be positive")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "claims", {v: frozenset(self.claims.get(v, ())) for v in users})
        object.__setattr__(self, "bids", {v: float(self.bids[v]) for v in users})

    def with_bid(self, user: int, bid: float) -> "BidProfile":
        bids = dict(self.bids)
        bids[user] = bid
        return BidProfile(self.users, self.claims, bids)

    def claimed_tasks(self) -> set[int]:
        return set().union(*self.claims.values())


@dataclass
class CandidateStep:
    step: int
    rival: int | None
    rival_bid: float
    critical_bid: float
    remaining_budget: float


@dataclass
class PaymentTrace:
    user: int
    payment: float
    steps: list[CandidateStep] = field(default_factory=list)
    exhausted: bool = False

    @property
    def critical_max(self) -> float:
        finite = [s.critical_bid for s in self.steps if s.rival is not None]
        return max(finite, default=-math.inf)


@dataclass
class AuctionOutcome:
    winners: list[int]
    payments: dict[int, float]
    bids: dict[int, float]
    traces: dict[int, PaymentTrace]
    evaluations: int = 0

    @property
    def total_bid(self) -> float:
        return float(sum(self.bids[v] for v in self.winners))

    @property
    def total_payment(self) -> float:
        return float(sum(self.payments[v] for v in self.winners))

    @property
    def overpayment_ratio(self) -> float:
        return overpayment_ratio([self.payments[v] for v in self.winners], [self.bids[v] for v in self.winners])

    def utility(self, user: int, cost: float) -> float:
        return self.payments[user] - cost if user in self.payments else 0.0


def overpayment_ratio(payments: Sequence[float], bids: Sequence[float]) -> float:
    """``(sum p - sum b) / sum b``; NaN for an empty winner set."""
    tb = float(sum(bids))
    if tb == 0:
        return math.nan
    return (float(sum(payments)) - tb) / tb


class Mechanism:
    """The auction bound to one MT-RR collection and one candidate pool.

    Coverage bookkeeping is built once and copied for every greedy replay, so
    repeated runs with different bids (as in truthfulness probes) are cheap.
    """

    def __init__(self, collection: RrCollection, users: Sequence[int], claims: Claims):
        self.collection = collection
        self.users = np.asarray(sorted(set(int(v) for v in users)), dtype=np.int64)
        self._pos = {int(v): k for k, v in enumerate(self.users.tolist())}
        self.base = CoverageState(collection, self.users, claims)
        self.evaluations = 0

    def _bid_vector(self, bids: Mapping[int, float]) -> np.ndarray:
        b = np.array([float(bids[v]) for v in self.users.tolist()])
        if np.any(b <= 0):
            raise ValueError("bids must be positive")
        return b

    def _gains(self, state: CoverageState) -> np.ndarray:
        self.evaluations += self.users.size
        return state.gains()

    def select_winners(self, bids: Mapping[int, float], budget: float) -> list[int]:
        """Greedy by gain per bid, ties to the lowest id; stops at the first overflow."""
        if budget <= 0:
            raise ValueError("budget must be positive")
        b = self._bid_vector(bids)
        state = self.base.copy()
        winners: list[int] = []
        spent = 0.0
        while len(winners) < self.users.size:
            g = self._gains(state)
            ratio = np.where(state.chosen, -np.inf, g / b)
            k = int(np.argmax(ratio))
            if not g[k] > 0 or spent + b[k] > budget:
                break
            winners.append(int(self.users[k]))
            spent += b[k]
            state.add(k)
        return winners

    def payment(self, user: int, bids: Mapping[int, float], budget: float, rule: str = "critical") -> PaymentTrace:
        """Payment of ``user`` from the greedy replay over all other users.

        At replay step ``a`` the user could take the place of rival ``a`` with
        any bid up to ``b_rival * gain(user) / gain(rival)``. Under the
        ``critical`` rule that candidate is capped by the budget left before
        step ``a`` and the replay runs until the rivals themselves overflow
        the budget, which makes the payment the exact threshold bid. The
        ``uncapped`` rule leaves candidates uncapped and stops once the rivals
        plus the user's own bid exceed the budget.
        """
        if rule not in PAYMENT_RULES:
            raise ValueError(f"unknown payment rule {rule!r}")
        b = self._bid_vector(bids)
        ki = self._pos[user]
        own = b[ki]
        state = self.base.copy()
        state.chosen[ki] = True  # never selectable, but its gain is still tracked
        trace = PaymentTrace(user, -math.inf)
        spent = 0.0
        step = 0
        while True:
            g = self._gains(state)
            gi = g[ki]
            if not gi > 0:
                break
            rival_gain = np.where(state.chosen, -np.inf, g)
            k = int(np.argmax(np.where(state.chosen, -np.inf, g / b)))
            step += 1
            if state.chosen[k] or not rival_gain[k] > 0:
                # nobody else can still add value: the user would be next in line
                trace.exhausted = True
                if rule == "uncapped" and spent + own > budget:
                    break
                trace.steps.append(CandidateStep(step, None, math.nan, math.inf, budget - spent))
                trace.payment = max(trace.payment, budget - spent)
                break
            crit = b[k] * gi / g[k]
            remaining = budget - spent
            term = min(crit, remaining) if rule == "critical" else crit
            trace.steps.append(CandidateStep(step, int(self.users[k]), float(b[k]), float(crit), float(remaining)))
            trace.payment = max(trace.payment, term)
            if rule == "critical":
                if spent + b[k] > budget:
                    break
                spent += b[k]
                state.add(k)
            else:
                spent += b[k]
                state.add(k)
                if spent + own > budget:
                    break
        return trace

    def run(self, bids: Mapping[int, float], budget: float, rule: str = "critical") -> AuctionOutcome:
        start = self.evaluations
        winners = self.select_winners(bids, budget)
        traces = {v: self.payment(v, bids, budget, rule) for v in winners}
        payments = {v: traces[v].payment for v in winners}
        if rule == "critical":
            for v in winners:
                # individual rationality holds by construction; a failure is a bug
                if payments[v] < bids[v] * (1 - 1e-12):
                    raise RuntimeError(f"payment {payments[v]} below bid {bids[v]} for winner {v}")
        return AuctionOutcome(
            winners,
            payments,
            {v: float(bids[v]) for v in self.users.tolist()},
            traces,
            self.evaluations - start,
        )

    def utility_at(self, user: int, bid: float, bids: Mapping[int, float], budget: float, cost: float, rule: str = "critical") -> tuple[bool, float, float]:
        """Rerun with ``user`` bidding ``bid``: (won, payment, utility against ``cost``)."""
        trial = dict(bids)
        trial[user] = bid
        winners = self.select_winners(trial, budget)
        if user not in winners:
            return False, 0.0, 0.0
        p = self.payment(user, trial, budget, rule).payment
        return True, p, p - cost


def select_winners(collection: RrCollection, profile: BidProfile, budget: float) -> list[int]:
    return Mechanism(collection, profile.users, profile.claims).select_winners(profile.bids, budget)


def compute_payment(user: int, collection: RrCollection, profile: BidProfile, budget: float, rule: str = "critical") -> PaymentTrace:
    return Mechanism(collection, profile.users, profile.claims).payment(user, profile.bids, budget, rule)


def run_auction(collection: RrCollection, profile: BidProfile, budget: float, rule: str = "critical") -> AuctionOutcome:
    return Mechanism(collection, profile.users, profile.claims).run(profile.bids, budget, rule)


def critical_bid_search(
    mech: Mechanism, user: int, bids: Mapping[int, float], budget: float, tol: float = 1e-7
) -> float:
    """Largest winning bid of ``user`` by bisection on reruns of the selection.

    Relies on the allocation being monotone in the bid; returns 0 if the user
    does not win even with a vanishing bid.
    """
    def wins(x: float) -> bool:
        trial = dict(bids)
        trial[user] = x
        return user in mech.select_winners(trial, budget)

    lo = tol
    if not wins(lo):
        return 0.0
    hi = max(budget, lo) * 2
    while wins(hi):
        hi *= 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if wins(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class ProbePoint:
    bid: float
    won: bool
    payment: float
    utility: float


def truthfulness_probe(
    mech: Mechanism,
    user: int,
    bid_grid: Sequence[float],
    bids: Mapping[int, float],
    budget: float,
    cost: float,
    rule: str = "critical",
) -> list[ProbePoint]:
    """Utility of ``user`` across alternative bids, everything else held fixed."""
    out = []
    for x in bid_grid:
        won, p, u = mech.utility_at(user, float(x), bids, budget, cost, rule)
        out.append(ProbePoint(float(x), won, p, u))
    return out
