"""Optimal randomized auctions via exact linear programming.

Two-day: one price lottery per day per reported type, prices restricted
without loss to the valuation supports plus {0, no-sale} (off-support mass
can always be moved to the neighbouring support points without losing
revenue or incentive compatibility, see ``normalize_prices``).

Multi-day, several independent bidders: joint outcome-history distributions
with "ignorance about the future" marginal equalities, and incentive
constraints encoded by a dynamic program folded into the LP: per history, an
epigraph variable is bounded below by the utility of every current report
(whose continuation re-uses the next day's epigraph variables), and on
truthful histories the truthful continuation must dominate the epigraph
variable.  The resulting sandwich pins each epigraph variable to the exact
best-deviation value, so LP feasibility coincides with exact incentive
compatibility.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction

from . import lpcore
from .audit import check_randomized
from .lpcore import OPTIMAL, LpProblem, solve_lp
from .model import (
    NO_SALE,
    ONE,
    ZERO,
    AdaptiveMechanism,
    BuyerType,
    MultiDayInstance,
    Price,
    RandomizedMechanism,
    TwoDayInstance,
    format_price,
    is_no_sale,
)


@dataclass(frozen=True)
class PriceGrid:
    """Candidate price sets per day: support values plus 0 and no-sale."""

    day1: tuple[Price, ...]
    day2: tuple[Price, ...]

    @classmethod
    def for_instance(cls, inst: TwoDayInstance) -> "PriceGrid":
        day1 = sorted(set(inst.day1_values()) | {ZERO})
        day2 = sorted(set(inst.day2_values()) | {ZERO})
        return cls(tuple(day1) + (NO_SALE,), tuple(day2) + (NO_SALE,))


def _split_off_grid(lottery, grid_values: list[Fraction]):
    """Move mass at off-grid finite prices onto the two neighbouring grid
    prices, preserving the expected price; mass beyond the top of the grid
    can never sell and becomes no-sale mass."""
    acc: dict[str, tuple[Price, Fraction]] = {}

    def add(price: Price, w: Fraction):
        key = format_price(price)
        if key in acc:
            acc[key] = (price, acc[key][1] + w)
        else:
            acc[key] = (price, w)

    top = grid_values[-1]
    for price, w in lottery:
        if is_no_sale(price) or price in grid_values:
            add(price, w)
        elif price > top:
            add(NO_SALE, w)
        else:
            i = bisect.bisect_left(grid_values, price)
            lo, hi = grid_values[i - 1], grid_values[i]
            alpha = (hi - price) / (hi - lo)
            add(lo, alpha * w)
            add(hi, (ONE - alpha) * w)
    return tuple(sorted(acc.values(),
                        key=lambda e: (e[0] is NO_SALE, e[0] if e[0] is not NO_SALE else ZERO)))


def normalize_prices(inst: TwoDayInstance, mech: RandomizedMechanism) -> RandomizedMechanism:
    """Rewrite all lotteries onto the instance's price grid; revenue never
    decreases and incentive compatibility is preserved.  Idempotent."""
    grid = PriceGrid.for_instance(inst)
    g1 = [p for p in grid.day1 if not is_no_sale(p)]
    g2 = [p for p in grid.day2 if not is_no_sale(p)]
    entries = []
    for v1, lot1, lot2 in mech.entries:
        entries.append((v1, _split_off_grid(lot1, g1), _split_off_grid(lot2, g2)))
    return RandomizedMechanism(tuple(entries))


def build_two_day_lp(inst: TwoDayInstance) -> tuple[LpProblem, PriceGrid]:
    """The lottery LP: per type, day-1 mass on grid prices up to the report
    plus no-sale, day-2 mass on the full day-2 grid; objective is expected
    revenue; one truthfulness row per ordered pair of types."""
    grid = PriceGrid.for_instance(inst)
    lp = LpProblem("two-day")
    types = sorted(inst.types, key=lambda t: t.v1)

    day1_vars: dict[tuple[Fraction, Price], int] = {}
    day2_vars: dict[tuple[Fraction, Price], int] = {}
    for t in types:
        for p in grid.day1:
            if is_no_sale(p) or p <= t.v1:
                j = lp.add_var(f"x1[{format_price(p)}|{t.v1}]")
                day1_vars[(t.v1, p)] = j
                if not is_no_sale(p):
                    lp.add_objective(j, t.prob * p)
        for q in grid.day2:
            j = lp.add_var(f"x2[{format_price(q)}|{t.v1}]")
            day2_vars[(t.v1, q)] = j
            if not is_no_sale(q):
                lp.add_objective(j, t.prob * q * t.day2.tail(q))
    for t in types:
        lp.add_constraint(
            {j: ONE for (v1, _), j in day1_vars.items() if v1 == t.v1}, "=", ONE)
        lp.add_constraint(
            {j: ONE for (v1, _), j in day2_vars.items() if v1 == t.v1}, "=", ONE)

    def utility_terms(true_t: BuyerType, reported: Fraction, sign: int, coeffs: dict):
        for p in grid.day1:
            if not is_no_sale(p) and p <= reported:
                j = day1_vars[(reported, p)]
                coeffs[j] = coeffs.get(j, ZERO) + sign * (true_t.v1 - p)
        for q in grid.day2:
            if not is_no_sale(q):
                u2 = true_t.day2.tail_area(q, NO_SALE)
                if u2:
                    j = day2_vars[(reported, q)]
                    coeffs[j] = coeffs.get(j, ZERO) + sign * u2

    for t in types:
        for u in types:
            if u.v1 == t.v1:
                continue
            coeffs: dict[int, Fraction] = {}
            utility_terms(t, t.v1, 1, coeffs)
            utility_terms(t, u.v1, -1, coeffs)
            lp.add_constraint(coeffs, ">=", ZERO)
    return lp, grid


def solve_two_day(inst: TwoDayInstance, pivot_cap: int | None = None
                  ) -> tuple[RandomizedMechanism, Fraction]:
    """Revenue-optimal randomized two-day auction (report-then-two-price-
    lotteries form).  The returned mechanism re-audits feasible at exactly
    the returned revenue."""
    lp, grid = build_two_day_lp(inst)
    sol = solve_lp(lp, pivot_cap)
    if sol.status != OPTIMAL:  # pragma: no cover - all-no-sale is feasible
        raise RuntimeError(f"two-day LP unexpectedly {sol.status}")
    entries = []
    for t in sorted(inst.types, key=lambda t: t.v1):
        lot1 = []
        for p in grid.day1:
            if is_no_sale(p) or p <= t.v1:
                w = sol.value(f"x1[{format_price(p)}|{t.v1}]")
                if w:
                    lot1.append((p, w))
        lot2 = []
        for q in grid.day2:
            w = sol.value(f"x2[{format_price(q)}|{t.v1}]")
            if w:
                lot2.append((q, w))
        entries.append((t.v1, tuple(lot1), tuple(lot2)))
    mech = RandomizedMechanism(tuple(entries))
    report = check_randomized(inst, mech)
    if not report.feasible or report.revenue != sol.objective_value:
        raise lpcore.LpCertificationError(
            "two-day solution failed its audit round-trip")
    return mech, sol.objective_value


def two_day_as_multi(inst: TwoDayInstance) -> MultiDayInstance:
    """View a two-day single-bidder type space as an instance of the
    multi-day model."""
    day1 = tuple(sorted(t.v1 for t in inst.types))
    day2 = tuple(sorted(inst.day2_values()))
    conditionals = {
        (): tuple(((t.v1,), t.prob) for t in sorted(inst.types, key=lambda t: t.v1))
    }
    for t in inst.types:
        conditionals[((t.v1,),)] = tuple(((v,), p) for v, p in t.day2.atoms)
    return MultiDayInstance(2, 1, ((day1, day2),), conditionals)


# ---------------------------------------------------------------------------
# Multi-day adaptive LP


def _day_outcomes(inst: MultiDayInstance, d: int, reported_vec) -> list:
    """Feasible day-d outcomes for the reported valuations: no sale, or
    (bidder, price) with the price on the bidder's day-d grid and within her
    reported valuation."""
    outs = [None]
    for i in range(inst.bidders):
        for p in sorted(set(inst.supports[i][d]) | {ZERO}):
            if p <= reported_vec[i]:
                outs.append((i, p))
    return outs


def _per_bidder_chains(inst: MultiDayInstance):
    """Marginal per-bidder valuation chains; for several bidders the joint
    table must factor into their product (independent bidders)."""
    chains = []
    for i in range(inst.bidders):
        chain: dict[tuple, dict[Fraction, Fraction]] = {}
        for hist, rows in inst.conditionals.items():
            own_hist = tuple(vec[i] for vec in hist)
            marg = chain.setdefault(own_hist, {})
            total = sum(p for _, p in rows)
            for vec, p in rows:
                marg[vec[i]] = marg.get(vec[i], ZERO) + p / total
        chains.append(chain)
    if inst.bidders > 1:
        for hist, rows in inst.conditionals.items():
            for vec, p in rows:
                prod = ONE
                for i in range(inst.bidders):
                    own_hist = tuple(v[i] for v in hist)
                    prod *= chains[i][own_hist].get(vec[i], ZERO)
                if prod != p:
                    raise ValueError(
                        "multi-bidder instances must have independent bidders")
    return chains


class _MultiDayBuilder:
    """Assembles the adaptive-auction LP for one instance."""

    def __init__(self, inst: MultiDayInstance, var_cap: int):
        self.inst = inst
        self.var_cap = var_cap
        self.lp = LpProblem("multi-day")
        self.chains = _per_bidder_chains(inst)
        self.pi: dict[tuple, int] = {}     # (outcomes, reported path) -> var
        self.layers: list[list[tuple]] = []
        self.ustar: dict[tuple, int] = {}
        self._count = 0

    def _new_var(self, name: str, free: bool = False) -> int:
        self._count += 1
        if self._count > self.var_cap:
            raise lpcore.LpBudgetError(
                f"multi-day LP needs more than {self.var_cap} variables; "
                "raise the budget to solve this instance")
        return self.lp.add_var(name, free=free)

    # per-bidder marginal helpers -------------------------------------------
    def own_next(self, i: int, own_hist: tuple):
        return sorted(self.chains[i][own_hist].items())

    def others_next(self, i: int, others_hist: tuple):
        """Joint distribution of the other bidders' day-d values given their
        histories; a single empty vector when there are no other bidders."""
        others = [b for b in range(self.inst.bidders) if b != i]
        combos = [((), ONE)]
        for b in others:
            hist_b = tuple(v[others.index(b)] for v in others_hist)
            new = []
            for vec, pr in combos:
                for val, p in self.own_next(b, hist_b):
                    new.append((vec + (val,), pr * p))
            combos = new
        return combos

    def joint_vec(self, i: int, own_val, others_vec) -> tuple:
        vec = []
        k = 0
        for b in range(self.inst.bidders):
            if b == i:
                vec.append(own_val)
            else:
                vec.append(others_vec[k])
                k += 1
        return tuple(vec)

    def joint_path(self, i: int, own_path: tuple, others_path: tuple) -> tuple:
        return tuple(
            self.joint_vec(i, own_path[d], others_path[d])
            for d in range(len(own_path))
        )

    # LP assembly -------------------------------------------------------------
    def build(self) -> LpProblem:
        inst = self.inst
        D = inst.days
        frontier = [((), ())]
        for d in range(D):
            layer = []
            for outs, path in frontier:
                for vec, _ in inst.next_vectors(path):
                    for o in _day_outcomes(inst, d, vec):
                        key = (outs + (o,), path + (vec,))
                        self.pi[key] = self._new_var(f"pi{key}")
                        layer.append(key)
            self.layers.append(layer)
            frontier = layer

        for d in range(D):
            by_path: dict[tuple, dict[int, Fraction]] = {}
            for outs, path in self.layers[d]:
                by_path.setdefault(path, {})[self.pi[(outs, path)]] = ONE
            for coeffs in by_path.values():
                self.lp.add_constraint(coeffs, "=", ONE)

        for d in range(D - 1):
            for outs, path in self.layers[d]:
                coeffs = {self.pi[(outs, path)]: -ONE}
                for vec, pr in inst.next_vectors(path):
                    for o in _day_outcomes(inst, d + 1, vec):
                        j = self.pi[(outs + (o,), path + (vec,))]
                        coeffs[j] = coeffs.get(j, ZERO) + pr
                self.lp.add_constraint(coeffs, "=", ZERO)

        for outs, path in self.layers[D - 1]:
            pr = self.path_prob(path)
            total = sum((o[1] for o in outs if o is not None), ZERO)
            if total:
                self.lp.add_objective(self.pi[(outs, path)], pr * total)

        for i in range(inst.bidders):
            self._ic_for_bidder(i)
        return self.lp

    def path_prob(self, path) -> Fraction:
        pr = ONE
        hist = ()
        for vec in path:
            pr *= next(p for v, p in self.inst.next_vectors(hist) if v == vec)
            hist = hist + (vec,)
        return pr

    def _ic_for_bidder(self, i: int):
        inst = self.inst
        D = inst.days
        memo: dict[tuple, dict[int, Fraction]] = {}

        def deviation_utility(d, true_val, rep_val, true_own, rep_own,
                              others_hist, outs) -> dict[int, Fraction]:
            """Reach-probability-weighted utility of reporting ``rep_val``
            with true current value ``true_val``, as a linear form in pi and
            epigraph variables."""
            key = (d, true_val, rep_val, true_own, rep_own, others_hist, outs)
            if key in memo:
                return memo[key]
            coeffs: dict[int, Fraction] = {}
            new_true = true_own + (true_val,)
            new_rep = rep_own + (rep_val,)
            rep_path_prefix = self.joint_path(i, rep_own, others_hist)
            for others_vec, w in self.others_next(i, others_hist):
                rep_vec = self.joint_vec(i, rep_val, others_vec)
                rep_path = rep_path_prefix + (rep_vec,)
                for o in _day_outcomes(inst, d, rep_vec):
                    j = self.pi[(outs + (o,), rep_path)]
                    if o is not None and o[0] == i:
                        gain = w * (true_val - o[1])
                        if gain:
                            coeffs[j] = coeffs.get(j, ZERO) + gain
                    if d + 1 < D:
                        for nxt_val, p in self.own_next(i, new_true):
                            uj = self.ustar_var(
                                d + 1, nxt_val, new_true, new_rep,
                                others_hist + (others_vec,), outs + (o,))
                            coeffs[uj] = coeffs.get(uj, ZERO) + w * p
            memo[key] = coeffs
            return coeffs

        def truthful_rows(d, true_own, others_hist, outs):
            for val, _ in self.own_next(i, true_own):
                coeffs = dict(deviation_utility(
                    d, val, val, true_own, true_own, others_hist, outs))
                uj = self.ustar_var(d, val, true_own, true_own, others_hist, outs)
                coeffs[uj] = coeffs.get(uj, ZERO) - ONE
                self.lp.add_constraint(coeffs, ">=", ZERO)

        self._deviation_utility = deviation_utility  # used by ustar_var
        self._walk_truthful(i, truthful_rows)

    def ustar_var(self, d, val, true_own, rep_own, others_hist, outs) -> int:
        """Epigraph variable for the best continuation utility at this
        history; lower-bounded by the utility of every current report."""
        key = (d, val, true_own, rep_own, others_hist, outs)
        if key in self.ustar:
            return self.ustar[key]
        j = self._new_var(f"U{key}", free=True)
        self.ustar[key] = j
        for rep in [v for v, _ in self.own_next(self._cur_bidder, rep_own)]:
            coeffs = dict(self._deviation_utility(
                d, val, rep, true_own, rep_own, others_hist, outs))
            coeffs[j] = coeffs.get(j, ZERO) - ONE
            self.lp.add_constraint(coeffs, "<=", ZERO)
        return j

    def _walk_truthful(self, i: int, emit):
        """Visit every truthful history (own true path, others' path, feasible
        outcome history) of every depth and emit truthfulness rows."""
        inst = self.inst
        self._cur_bidder = i

        def rec(d, true_own, others_hist, outs):
            emit(d, true_own, others_hist, outs)
            if d + 1 >= inst.days:
                return
            for val, _ in self.own_next(i, true_own):
                for others_vec, _ in self.others_next(i, others_hist):
                    vec = self.joint_vec(i, val, others_vec)
                    for o in _day_outcomes(inst, d, vec):
                        rec(d + 1, true_own + (val,),
                            others_hist + (others_vec,), outs + (o,))

        rec(0, (), (), ())


def solve_multi_day(inst: MultiDayInstance, var_cap: int | None = None,
                    pivot_cap: int | None = None
                    ) -> tuple[AdaptiveMechanism, Fraction]:
    """Revenue-optimal adaptive auction for finitely many days and a small
    number of independent bidders, by exact LP."""
    cap = var_cap if var_cap is not None else max(100, lpcore.DEFAULT_BUDGET // 1000)
    builder = _MultiDayBuilder(inst, cap)
    lp = builder.build()
    sol = solve_lp(lp, pivot_cap)
    if sol.status != OPTIMAL:  # pragma: no cover - all-no-sale is feasible
        raise RuntimeError(f"multi-day LP unexpectedly {sol.status}")
    day_probs = []
    for layer in builder.layers:
        day_probs.append({
            key: sol.assignment[lp.var_names[builder.pi[key]]] for key in layer
        })
    mech = AdaptiveMechanism(inst.days, inst.bidders, tuple(day_probs))
    if not mech.marginals_consistent(inst):  # pragma: no cover
        raise lpcore.LpCertificationError(
            "multi-day solution violates marginal consistency")
    return mech, sol.objective_value
