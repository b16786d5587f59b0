"""Deterministic-mechanism solvers.

Four routes, in increasing structure:

* ``non_adaptive_opt`` - two fixed posted prices, one per day (optimal
  posted price against each day's marginal).
* ``exact_small_solver`` - exact optimum for few types: once each day-2
  price is pinned to an interval between consecutive day-2 support values
  (or to the no-sale region) and the day-1 allocation set is fixed, every
  incentive integral is linear in the prices, so each cell is a small LP.
* ``fptas_fixed_first_day`` - day-1 prices given; day-2 prices on an
  eps-grid via a 0/1 program whose constraint matrix is made of difference
  rows only (totally unimodular), so the LP relaxation has integral
  vertices.
* ``independent_days_solver`` - identical day-2 distributions: the optimum
  has monotone allocation, winners split into a pay-full-price block and a
  free-day-2 block, and pairwise winner constraints hold with equality, so
  one scalar per block plus the losers' common price pins everything; the
  remaining freedom is closed by anchoring a price on the support or a
  winner-loser constraint tight, and all anchors are enumerated.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import lpcore
from .audit import check_deterministic, myerson
from .lpcore import INFEASIBLE, OPTIMAL, LpProblem, solve_lp
from .model import (
    NO_SALE,
    ONE,
    ZERO,
    BuyerType,
    DeterministicMechanism,
    DiscreteDistribution,
    Price,
    TwoDayInstance,
    is_no_sale,
)


class BudgetExceeded(RuntimeError):
    pass


class NoFeasibleMechanism(RuntimeError):
    pass


@dataclass(frozen=True)
class NonAdaptiveResult:
    day1_price: Fraction
    day2_price: Fraction
    revenue: Fraction


def non_adaptive_opt(inst: TwoDayInstance) -> NonAdaptiveResult:
    """Best pair of fixed posted prices: optimal posted price against the
    day-1 marginal plus the same against the day-2 marginal mixture."""
    p, rev1 = myerson(inst.day1_marginal())
    q, rev2 = myerson(inst.day2_marginal())
    return NonAdaptiveResult(p, q, rev1 + rev2)


def non_adaptive_mechanism(inst: TwoDayInstance) -> DeterministicMechanism:
    """The fixed-price optimum as an ordinary mechanism (same prices for
    every report; unaffordable day-1 prices become no-sale)."""
    res = non_adaptive_opt(inst)
    prices = {}
    for t in inst.types:
        p = res.day1_price if res.day1_price <= t.v1 else NO_SALE
        prices[t.v1] = (p, res.day2_price)
    return DeterministicMechanism.from_map(prices)


# ---------------------------------------------------------------------------
# exact solver for small numbers of types


def _interval_options(breaks: list[Fraction]):
    """Closed boxes between consecutive day-2 support values plus the
    no-sale region; a price exactly at a support value belongs to the box
    where that value is the upper end, so its atom counts toward a sale."""
    boxes = []
    lo = ZERO
    for hi in breaks:
        boxes.append((lo, hi))
        lo = hi
    boxes.append(None)  # no-sale region: above every support value
    return boxes


def _candidate_count(n_types: int, n_breaks: int) -> int:
    return (n_breaks + 1) ** n_types * 2 ** n_types


def exact_small_solver(inst: TwoDayInstance, budget: int | None = None,
                       first_day: dict | None = None
                       ) -> tuple[DeterministicMechanism, Fraction]:
    """Exact revenue-optimal deterministic mechanism by enumerating day-1
    allocation sets and day-2 price intervals, solving one LP per cell.

    ``first_day`` (optional) fixes every day-1 price (value -> price or
    NO_SALE) and restricts the search to day-2 completions; raises
    NoFeasibleMechanism when no completion satisfies the constraints.
    """
    cap = budget if budget is not None else max(100, lpcore.DEFAULT_BUDGET // 100)
    types = sorted(inst.types, key=lambda t: t.v1)
    n = len(types)
    breaks = sorted({v for t in types for v in t.day2.support if v > 0})
    if _candidate_count(n, len(breaks)) > cap and first_day is None:
        raise BudgetExceeded(
            f"exact solver would enumerate {_candidate_count(n, len(breaks))} "
            f"cells, over the budget {cap}")
    boxes = _interval_options(breaks)

    if first_day is not None:
        for t in types:
            p = first_day[t.v1]
            if not is_no_sale(p) and p > t.v1:
                raise ValueError(f"fixed day-1 price {p} exceeds valuation {t.v1}")
        allocations = [tuple(not is_no_sale(first_day[t.v1]) for t in types)]
    else:
        allocations = [
            tuple(bool(mask >> i & 1) for i in range(n))
            for mask in range(2 ** n)
        ]

    # prefix integrals of each type's day-2 tail, linear inside every box
    def area_expr(t: BuyerType, box, qvar: str | None):
        """I_t(q) as (coeffs, const) where q lives in ``box``."""
        if box is None:
            return {}, t.day2.tail_area(ZERO, NO_SALE)
        lo, _ = box
        const = t.day2.tail_area(ZERO, lo)
        slope = t.day2.tail_above(lo)
        if qvar is None or slope == 0:
            return {}, const  # slope-0 contribution folds into the constant
        return {qvar: slope}, const - slope * lo

    best: tuple[Fraction, DeterministicMechanism] | None = None

    def upper_bound(alloc, win_boxes, lose_box) -> Fraction:
        ub = ZERO
        for i, t in enumerate(types):
            if alloc[i]:
                ub += t.prob * (first_day[t.v1] if first_day is not None else t.v1)
                box = win_boxes[i]
            else:
                box = lose_box
            if box is not None:
                ub += t.prob * box[1] * t.day2.tail(box[1])
        return ub

    def cells():
        for alloc in allocations:
            winners = [i for i in range(n) if alloc[i]]
            losers = [i for i in range(n) if not alloc[i]]

            def rec(idx, chosen):
                if idx == len(winners):
                    if losers:
                        for lb in boxes:
                            yield alloc, dict(chosen), lb
                    else:
                        yield alloc, dict(chosen), None
                    return
                for b in boxes:
                    chosen[winners[idx]] = b
                    yield from rec(idx + 1, chosen)
                del chosen[winners[idx]]

            yield from rec(0, {})

    ranked = sorted(
        cells(),
        key=lambda cell: upper_bound(cell[0], cell[1], cell[2]),
        reverse=True,
    )
    for alloc, win_boxes, lose_box in ranked:
        if best is not None and upper_bound(alloc, win_boxes, lose_box) <= best[0]:
            break
        cand = _solve_cell(inst, types, alloc, win_boxes, lose_box, first_day, area_expr)
        if cand is None:
            continue
        rev, mech = cand
        if best is None or rev > best[0] or (rev == best[0] and mech.sort_key() < best[1].sort_key()):
            best = (rev, mech)

    if best is None:
        raise NoFeasibleMechanism("no day-2 completion satisfies the constraints")
    return best[1], best[0]


def _solve_cell(inst, types, alloc, win_boxes, lose_box, first_day, area_expr):
    """One enumeration cell: prices boxed, incentive rows linear; returns the
    audited (revenue, mechanism) of the cell's LP optimum, or None."""
    n = len(types)
    lp = LpProblem("cell")
    pvar: dict[int, str | None] = {}
    qvar: dict[int, str | None] = {}

    def add_q(i, box, name):
        if box is None:
            qvar[i] = None
            return
        lo, hi = box
        lp.add_var(name, lb=lo, ub=hi)
        qvar[i] = name
        t = types[i]
        tail = t.day2.tail(hi)
        if tail:
            lp.add_objective(lp.var(name), t.prob * tail)

    losers = [i for i in range(n) if not alloc[i]]
    for i, t in enumerate(types):
        if alloc[i]:
            if first_day is not None:
                pvar[i] = None
            else:
                name = f"p{i}"
                lp.add_var(name, lb=ZERO, ub=t.v1)
                lp.add_objective(lp.var(name), t.prob)
                pvar[i] = name
            add_q(i, win_boxes[i], f"q{i}")
        else:
            pvar[i] = None
    if losers:
        add_q(losers[0], lose_box, "qL")
        for j in losers[1:]:
            qvar[j] = qvar[losers[0]]

    def p_expr(i):
        if alloc[i] and first_day is not None:
            return {}, first_day[types[i].v1]
        if alloc[i]:
            return {pvar[i]: ONE}, ZERO
        return {}, None

    def q_box(i):
        return (win_boxes[i] if alloc[i] else lose_box)

    def add_row(terms, rel, rhs):
        coeffs = {}
        const = ZERO
        for sign, (cc, c0) in terms:
            for v, a in cc.items():
                j = lp.var(v)
                coeffs[j] = coeffs.get(j, ZERO) + sign * a
            const += sign * c0
        lp.add_constraint(coeffs, rel, rhs - const)

    # pairwise incentive rows (the no-sale day-1 case for losers is the
    # shared day-2 variable, nothing to add)
    for a in range(n):
        for b in range(n):
            if a == b or not (alloc[a] and alloc[b]):
                continue
            # I_a(q_a) - I_a(q_b) <= p_b - p_a
            Ia_qa = area_expr(types[a], q_box(a), qvar[a])
            Ia_qb = area_expr(types[a], q_box(b), qvar[b])
            pa = p_expr(a)
            pb = p_expr(b)
            add_row([(1, Ia_qa), (-1, Ia_qb), (-1, (pb[0], pb[1])),
                     (1, (pa[0], pa[1]))], "<=", ZERO)
    for w in range(n):
        if not alloc[w]:
            continue
        pw = p_expr(w)
        for j in losers:
            # I_j(q_w) - I_j(q_L) >= v_j - p_w
            Ij_qw = area_expr(types[j], q_box(w), qvar[w])
            Ij_ql = area_expr(types[j], q_box(j), qvar[j])
            add_row([(1, Ij_qw), (-1, Ij_ql), (1, pw)], ">=", types[j].v1)
        if losers:
            # v_w - p_w >= I_w(q_w) - I_w(q_L)
            Iw_qw = area_expr(types[w], q_box(w), qvar[w])
            Iw_ql = area_expr(types[w], q_box(losers[0]), qvar[losers[0]])
            add_row([(1, Iw_qw), (-1, Iw_ql), (1, pw)], "<=", types[w].v1)

    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        return None
    prices = {}
    for i, t in enumerate(types):
        if alloc[i]:
            p = first_day[t.v1] if first_day is not None else sol.assignment[pvar[i]]
        else:
            p = NO_SALE
        q = NO_SALE if qvar[i] is None else sol.assignment[qvar[i]]
        prices[t.v1] = (p, q)
    mech = DeterministicMechanism.from_map(prices)
    report = check_deterministic(inst, mech)
    if not report.feasible:  # pragma: no cover - rows are the exact audit
        raise AssertionError("cell optimum failed its audit")
    return report.revenue, mech


# ---------------------------------------------------------------------------
# fixed-first-day grid program


@dataclass(frozen=True)
class FptasResult:
    status: str
    mechanism: DeterministicMechanism | None
    revenue: Fraction | None
    binding_pair: tuple | None


def _area_inverse_min(dist: DiscreteDistribution, y: Fraction):
    """Smallest q with I(q) = integral of the tail from 0 to q equal to y;
    None when y exceeds the total area.  I is strictly increasing until the
    top of the support, so the minimum is unique."""
    if y <= 0:
        return ZERO
    total = dist.tail_area(ZERO, NO_SALE)
    if y > total:
        return None
    lo = ZERO
    acc = ZERO
    for v in dist.support:
        if v <= lo:
            continue
        slope = dist.tail_above(lo)
        seg = (v - lo) * slope
        if acc + seg >= y:
            return lo + (y - acc) / slope
        acc += seg
        lo = v
    return lo  # y == total


def fptas_fixed_first_day(inst: TwoDayInstance, first_day: dict,
                          grid_eps: Fraction) -> FptasResult:
    """Optimize day-2 prices on a grid of multiples of ``grid_eps`` given
    every day-1 price.  Interval bounds implied by pairwise incentive
    constraints are rounded inward (lower bounds up), so the decoded
    mechanism is always exactly incentive compatible; the relaxation vertex
    is integral and is asserted to be."""
    grid_eps = Fraction(grid_eps)
    if grid_eps <= 0:
        raise ValueError("grid_eps must be positive")
    types = sorted(inst.types, key=lambda t: t.v1)
    n = len(types)
    for t in types:
        p = first_day[t.v1]
        if not is_no_sale(p) and p > t.v1:
            raise ValueError(f"fixed day-1 price {p} exceeds valuation {t.v1}")
    maxsupp = max(v for t in types for v in t.day2.support)
    M = int(maxsupp / grid_eps) + 1  # price M*eps sells to nobody

    lp = LpProblem("fixed-first-day-grid")
    x = [[None] * (M + 1) for _ in range(n)]
    for i, t in enumerate(types):
        prev_rev = ZERO
        for k in range(1, M + 1):
            name = f"x{i}_{k}"
            lp.add_var(name, lb=ZERO, ub=ONE)
            x[i][k] = name
            price = k * grid_eps
            rev = t.prob * price * t.day2.tail(price)
            lp.add_objective(lp.var(name), rev - prev_rev)
            prev_rev = rev
            if k >= 2:
                lp.add_constraint({lp.var(x[i][k]): ONE, lp.var(x[i][k - 1]): -ONE},
                                  "<=", ZERO)

    def grid_ceil(q: Fraction) -> int:
        num = q / grid_eps
        k = int(num)
        if k < num:
            k += 1
        return k

    rows: list[tuple[tuple, dict, str, Fraction]] = []

    def implication(src: int, k: int, dst: int, lb: Fraction | None, pair):
        """q_src >= k*eps forces q_dst >= lb (rounded up to the grid)."""
        if lb is None:
            rows.append((pair, {lp.var(x[src][k]): ONE}, "<=", ZERO))
            return
        g = grid_ceil(lb)
        if g <= 0:
            return
        if g > M:
            rows.append((pair, {lp.var(x[src][k]): ONE}, "<=", ZERO))
            return
        rows.append((pair, {lp.var(x[src][k]): ONE, lp.var(x[dst][g]): -ONE},
                     "<=", ZERO))

    def couple(src: int, dst: int, dist: DiscreteDistribution, c: Fraction, pair):
        """Rows for: I_dist(q_dst) >= I_dist(q_src) - c, for q_src on grid."""
        for k in range(1, M + 1):
            y = dist.tail_area(ZERO, min(k * grid_eps, maxsupp)) - c
            if y <= 0:
                continue
            implication(src, k, dst, _area_inverse_min(dist, y), (src, dst))

    winners = [i for i in range(n) if not is_no_sale(first_day[types[i].v1])]
    losers = [i for i in range(n) if is_no_sale(first_day[types[i].v1])]
    for a in winners:
        for b in winners:
            if a == b:
                continue
            # I_a(q_a) - I_a(q_b) <= p_b - p_a
            c = first_day[types[b].v1] - first_day[types[a].v1]
            couple(a, b, types[a].day2, c, (a, b))
    for w in winners:
        pw = first_day[types[w].v1]
        for j in losers:
            # I_j(q_w) - I_j(q_L) >= v_j - p_w  <=>  q_w bounded below via F_j
            couple(j, w, types[j].day2, pw - types[j].v1, (j, w))
            # v_w - p_w >= I_w(q_w) - I_w(q_L)
            couple(w, j, types[w].day2, types[w].v1 - pw, (w, j))
    for a in losers:
        for b in losers:
            if a != b:
                for k in range(1, M + 1):
                    rows.append(((a, b), {lp.var(x[a][k]): ONE, lp.var(x[b][k]): -ONE},
                                 "<=", ZERO))
    for pair, coeffs, rel, rhs in rows:
        lp.add_constraint(coeffs, rel, rhs)

    sol = solve_lp(lp)
    if sol.status == INFEASIBLE:
        return FptasResult(INFEASIBLE, None, None, _binding_pair(lp, rows, n, x, M))
    assert sol.status == OPTIMAL
    prices = {}
    for i, t in enumerate(types):
        K = 0
        for k in range(1, M + 1):
            val = sol.assignment[x[i][k]]
            if val not in (ZERO, ONE):
                raise lpcore.LpCertificationError(
                    f"relaxation vertex not integral: {x[i][k]} = {val}")
            if val == ONE:
                K = k
        q = K * grid_eps
        prices[t.v1] = (first_day[t.v1], NO_SALE if q > maxsupp else q)
    mech = DeterministicMechanism.from_map(prices)
    report = check_deterministic(inst, mech)
    if not report.feasible:
        raise lpcore.LpCertificationError("grid mechanism failed its audit")
    return FptasResult(OPTIMAL, mech, report.revenue, None)


def _binding_pair(lp, rows, n, x, M):
    """On infeasibility, find a pair of types whose coupling rows alone are
    already unsatisfiable, for the diagnostic."""
    pairs = sorted({pair for pair, *_ in rows})
    for pair in pairs:
        probe = LpProblem("pair-probe")
        for i in range(n):
            for k in range(1, M + 1):
                probe.add_var(x[i][k], lb=ZERO, ub=ONE)
                if k >= 2:
                    probe.add_constraint(
                        {probe.var(x[i][k]): ONE, probe.var(x[i][k - 1]): -ONE},
                        "<=", ZERO)
        for p, coeffs, rel, rhs in rows:
            if p == pair or p == (pair[1], pair[0]):
                probe.add_constraint(dict(coeffs), rel, rhs)
        if solve_lp(probe).status == INFEASIBLE:
            return pair
    return None


# ---------------------------------------------------------------------------
# identical day-2 distributions


def independent_days_solver(inst: TwoDayInstance
                            ) -> tuple[DeterministicMechanism, Fraction]:
    """Exact optimum when every type's day-2 distribution is the same.

    Enumerates: the monotone losing prefix, the split of winners into a
    pay-full-price lower block and a free-day-2 upper block, then the anchors
    that pin the one remaining scalar per side (a day-2 price on the support,
    the losers' common price on the support, or a tight winner-loser
    constraint); everything else follows from the tight pairwise equalities.
    Every candidate is audited; the best feasible one is returned.
    """
    types = sorted(inst.types, key=lambda t: t.v1)
    common = types[0].day2
    for t in types[1:]:
        if t.day2.atoms != common.atoms:
            raise ValueError("day-2 distributions differ between types")
    n = len(types)
    F = common
    total_area = F.tail_area(ZERO, NO_SALE)
    supp = [v for v in F.support if v > 0]

    def area_to(q: Price) -> Fraction:
        return F.tail_area(ZERO, NO_SALE) if is_no_sale(q) else F.tail_area(ZERO, q)

    def inv_options(y: Fraction) -> list[Price]:
        """Prices q with I(q) = y; at saturation both the top of the support
        and no-sale qualify (same constraints, different revenue)."""
        if y < 0 or y > total_area:
            return []
        if y == total_area:
            top = _area_inverse_min(F, y)
            return [top, NO_SALE] if top is not None else [NO_SALE]
        q = _area_inverse_min(F, y)
        return [q] if q is not None else []

    best: tuple[Fraction, DeterministicMechanism] | None = None

    def consider(mech: DeterministicMechanism):
        nonlocal best
        report = check_deterministic(inst, mech)
        if not report.feasible:
            return
        rev = report.revenue
        if best is None or rev > best[0] or (rev == best[0] and mech.sort_key() < best[1].sort_key()):
            best = (rev, mech)

    seen: set = set()

    def materialize(L, s, tau, lam):
        """Build every mechanism consistent with the block structure and the
        scalars: tau parameterizes the winner chain (area at the top
        pay-full-price winner, or the common upper-block price when that
        block is alone), lam is the losers' area."""
        if (L, s, tau, lam) in seen:
            return
        seen.add((L, s, tau, lam))
        low = list(range(L, s))
        high = list(range(s, n))
        q_opts: list[list[Price]] = []
        p_vals: list[Fraction] = []
        for i in low:
            y = tau + (types[s - 1].v1 - types[i].v1)
            opts = inv_options(y)
            if not opts:
                return
            q_opts.append(opts)
            p_vals.append(types[i].v1)
        if high:
            p_high = (types[s - 1].v1 + tau) if low else tau
            if p_high < 0 or p_high > types[s].v1:
                return
            for i in high:
                q_opts.append([ZERO])
                p_vals.append(p_high)
        if L:
            if lam is None:
                return
            l_opts = inv_options(lam)
            if not l_opts:
                return

        def emit(idx, qs):
            if idx == len(low) + len(high):
                if L:
                    for ql in l_opts:
                        prices = {}
                        for j in range(L):
                            prices[types[j].v1] = (NO_SALE, ql)
                        for k, i in enumerate(low + high):
                            prices[types[i].v1] = (p_vals[k], qs[k])
                        consider(DeterministicMechanism.from_map(prices))
                else:
                    prices = {}
                    for k, i in enumerate(low + high):
                        prices[types[i].v1] = (p_vals[k], qs[k])
                    consider(DeterministicMechanism.from_map(prices))
                return
            for q in q_opts[idx]:
                emit(idx + 1, qs + [q])

        emit(0, [])

    for L in range(n + 1):
        winners = list(range(L, n))
        if not winners:
            # everyone loses: only the common day-2 price matters
            for sigma in supp + [NO_SALE]:
                lam = area_to(sigma)
                prices = {t.v1: (NO_SALE, sigma) for t in types}
                consider(DeterministicMechanism.from_map(prices))
            continue
        for s in range(L, n + 1):
            low = list(range(L, s))
            high = list(range(s, n))
            # anchor equations are linear in (tau, lam); enumerate sources
            tau_anchors: list[Fraction] = []
            if low:
                for i in low:
                    delta = types[s - 1].v1 - types[i].v1
                    for sigma in supp:
                        tau_anchors.append(area_to(sigma) - delta)
                    tau_anchors.append(total_area - delta)  # no day-2 sale
            else:
                # upper block alone: its common price can sit at the lowest
                # winner's valuation (participation binds)
                tau_anchors.append(types[s].v1)
            lam_anchors: list[Fraction] = []
            if L:
                for sigma in supp:
                    lam_anchors.append(area_to(sigma))
                lam_anchors.append(total_area)
            # tight winner-loser constraints: lam = tau + shift
            shift_anchors: list[Fraction] = []
            if L:
                for w in winners:
                    in_low = w < s
                    for j in range(L):
                        # I(q_w) - lam = v_j - p_w
                        if in_low:
                            shift_anchors.append(types[s - 1].v1 - types[j].v1)
                        else:
                            # lam = p_high - v_j with p_high affine in tau
                            base = types[s - 1].v1 if low else ZERO
                            shift_anchors.append(base - types[j].v1)
                    # v_w - p_w = I(q_w) - lam
                    if in_low:
                        shift_anchors.append(types[s - 1].v1 - types[w].v1)
                    else:
                        base = types[s - 1].v1 if low else ZERO
                        shift_anchors.append(base - types[w].v1)
            if not L:
                for tau in sorted(set(tau_anchors)):
                    materialize(L, s, tau, None)
            else:
                for tau in sorted(set(tau_anchors)):
                    for lam in sorted(set(lam_anchors)):
                        materialize(L, s, tau, lam)
                    for shift in sorted(set(shift_anchors)):
                        materialize(L, s, tau, tau + shift)
                for lam in sorted(set(lam_anchors)):
                    for shift in sorted(set(shift_anchors)):
                        materialize(L, s, lam - shift, lam)

    if best is None:  # pragma: no cover - the all-lose candidates always audit
        raise NoFeasibleMechanism("no candidate audited feasible")
    return best[1], best[0]
