"""Exact feasibility audits (incentive and participation constraints),
revenue accounting, and single-item posted-price optimization.

Tie-breaking: a buyer indifferent between buying and not buys, and an
indifferent deviator reports truthfully, so every check uses non-strict
inequalities.  A lottery entry whose finite price exceeds the buyer's
valuation is inert: it never sells and counts as no-sale probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import (
    NO_SALE,
    ZERO,
    DeterministicMechanism,
    DiscreteDistribution,
    Price,
    RandomizedMechanism,
    TwoDayInstance,
    format_price,
    is_no_sale,
)


@dataclass(frozen=True)
class Violation:
    kind: str
    types: tuple  # involved day-1 valuations, 1 or 2 of them
    lhs: Fraction
    rhs: Fraction

    @property
    def slack(self) -> Fraction:
        return abs(self.lhs - self.rhs)

    def describe(self) -> str:
        who = ",".join(str(t) for t in self.types)
        return f"{self.kind}({who}): lhs={self.lhs} rhs={self.rhs} slack={self.slack}"


@dataclass(frozen=True)
class AuditReport:
    feasible: bool
    violations: tuple[Violation, ...]
    revenue: Fraction
    day1_revenue: Fraction
    day2_revenue: Fraction

    def to_json_dict(self):
        return {
            "feasible": self.feasible,
            "revenue": str(self.revenue),
            "day1_revenue": str(self.day1_revenue),
            "day2_revenue": str(self.day2_revenue),
            "violations": [
                {
                    "kind": v.kind,
                    "types": [str(t) for t in v.types],
                    "lhs": str(v.lhs),
                    "rhs": str(v.rhs),
                    "slack": str(v.slack),
                }
                for v in self.violations
            ],
        }


def day2_utility(dist: DiscreteDistribution, q: Price) -> Fraction:
    """Buyer's expected day-2 utility at a take-it-or-leave-it price q.

    Equals the tail-function integral from q to the end of the support;
    NO_SALE yields 0.
    """
    if is_no_sale(q):
        return ZERO
    return dist.tail_area(q, NO_SALE)


def _report(violations, day1_rev, day2_rev) -> AuditReport:
    ordered = tuple(sorted(violations, key=lambda v: (v.types, v.kind)))
    return AuditReport(
        feasible=not ordered,
        violations=ordered,
        revenue=day1_rev + day2_rev,
        day1_revenue=day1_rev,
        day2_revenue=day2_rev,
    )


def check_deterministic(inst: TwoDayInstance, mech: DeterministicMechanism) -> AuditReport:
    """Audit a deterministic mechanism: ex-post participation on day 1 and
    every pairwise incentive constraint, all as exact comparisons."""
    for t in inst.types:
        mech.prices_for(t.v1)  # raises on a missing entry

    violations: list[Violation] = []
    day1 = ZERO
    day2 = ZERO
    receives: dict[Fraction, bool] = {}
    for t in inst.types:
        p, q = mech.prices_for(t.v1)
        sold = (not is_no_sale(p)) and p <= t.v1
        if not is_no_sale(p) and p > t.v1:
            violations.append(Violation("ir-day1", (t.v1,), p, t.v1))
        receives[t.v1] = sold
        if sold:
            day1 += t.prob * p
        if not is_no_sale(q):
            day2 += t.prob * q * t.day2.tail(q)

    types = sorted(inst.types, key=lambda t: t.v1)
    for a_idx in range(len(types)):
        for b_idx in range(a_idx + 1, len(types)):
            ta, tb = types[a_idx], types[b_idx]
            pa, qa = mech.prices_for(ta.v1)
            pb, qb = mech.prices_for(tb.v1)
            ra, rb = receives[ta.v1], receives[tb.v1]
            if ra and rb:
                # both receive: area under the other's tail between the two
                # day-2 prices brackets the day-1 price difference
                diff = pb - pa
                lhs = tb.day2.signed_tail_area(qb, qa)
                rhs = ta.day2.signed_tail_area(qb, qa)
                if not lhs >= diff:
                    violations.append(Violation("ic-both", (ta.v1, tb.v1), lhs, diff))
                if not diff >= rhs:
                    violations.append(Violation("ic-both", (tb.v1, ta.v1), diff, rhs))
            elif not ra and not rb:
                if format_price(qa) != format_price(qb) and qa != qb:
                    qa_n = ta.day2.tail(qa) if not is_no_sale(qa) else ZERO
                    qb_n = tb.day2.tail(qb) if not is_no_sale(qb) else ZERO
                    violations.append(Violation("ic-neither", (ta.v1, tb.v1), qa_n, qb_n))
            else:
                # exactly one receives; check both deviation directions
                (win, lose) = (ta, tb) if ra else (tb, ta)
                pw, qw = mech.prices_for(win.v1)
                _, ql = mech.prices_for(lose.v1)
                lhs = lose.day2.signed_tail_area(ql, qw)
                if not lhs >= lose.v1 - pw:
                    violations.append(
                        Violation("ic-mixed-lose", (lose.v1, win.v1), lhs, lose.v1 - pw)
                    )
                rhs = win.day2.signed_tail_area(ql, qw)
                if not win.v1 - pw >= rhs:
                    violations.append(
                        Violation("ic-mixed-win", (win.v1, lose.v1), win.v1 - pw, rhs)
                    )
    return _report(violations, day1, day2)


def randomized_utility(inst: TwoDayInstance, mech: RandomizedMechanism,
                       true_v1: Fraction, reported_v1: Fraction) -> Fraction:
    """Expected utility of a buyer with day-1 valuation ``true_v1`` reporting
    ``reported_v1``.  Day-1 prices count when <= the report; day-2 purchases
    happen whenever the realized valuation covers the price."""
    t = inst.type_with_v1(true_v1)
    lot1, lot2 = mech.lotteries_for(reported_v1)
    u = ZERO
    for p, w in lot1:
        if not is_no_sale(p) and p <= reported_v1:
            u += w * (true_v1 - p)
    for q, w in lot2:
        if not is_no_sale(q):
            u += w * t.day2.tail_area(q, NO_SALE)
    return u


def check_randomized(inst: TwoDayInstance, mech: RandomizedMechanism) -> AuditReport:
    """Audit a randomized mechanism: truth-telling dominates every report."""
    for t in inst.types:
        mech.lotteries_for(t.v1)

    day1 = ZERO
    day2 = ZERO
    for t in inst.types:
        lot1, lot2 = mech.lotteries_for(t.v1)
        for p, w in lot1:
            if not is_no_sale(p) and p <= t.v1:
                day1 += t.prob * w * p
        for q, w in lot2:
            if not is_no_sale(q):
                day2 += t.prob * w * q * t.day2.tail(q)

    violations: list[Violation] = []
    values = [t.v1 for t in sorted(inst.types, key=lambda t: t.v1)]
    truthful = {v: randomized_utility(inst, mech, v, v) for v in values}
    for v in values:
        for u in values:
            if u == v:
                continue
            dev = randomized_utility(inst, mech, v, u)
            if not truthful[v] >= dev:
                violations.append(Violation("ic", (v, u), truthful[v], dev))
    return _report(violations, day1, day2)


def myerson(dist: DiscreteDistribution) -> tuple[Fraction, Fraction]:
    """Revenue-maximizing posted price against ``dist``.

    Returns (price, revenue); revenue = max over support values v of
    v * Pr[val >= v], ties broken toward the lowest price.  An all-zero
    distribution prices at 0 with revenue 0.
    """
    best_price = ZERO
    best_rev = ZERO
    for v in dist.support:
        if v <= 0:
            continue
        rev = v * dist.tail(v)
        if rev > best_rev:
            best_price, best_rev = v, rev
    return best_price, best_rev
