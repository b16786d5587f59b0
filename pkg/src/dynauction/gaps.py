"""Separation families: instances with large gaps between fixed-price,
deterministic-adaptive and randomized revenue, with the explicit candidate
mechanisms that witness the gaps.

Families:

* ``harmonic`` - single day, equal-revenue distribution on 1..n: welfare
  over best posted-price revenue is exactly the n-th harmonic number.
* ``intro_independent`` - both days power-of-two distributed, independent;
  a lottery mechanism extracts the full day-1 welfare n while every pair of
  fixed prices stays below 4.
* ``correlated`` - day-2 scale grows with the day-1 value; the same lottery
  trick works and a deterministic punish-low-bids price schedule gets close.
* ``rand_vs_det`` - day-2 supports pushed far apart per type so that no
  deterministic mechanism can bridge them, while the lottery mechanism still
  collects n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .audit import check_deterministic, check_randomized, myerson
from .detsolve import exact_small_solver, BudgetExceeded, non_adaptive_mechanism, non_adaptive_opt
from .model import (
    NO_SALE,
    ONE,
    ZERO,
    BuyerType,
    DeterministicMechanism,
    DiscreteDistribution,
    RandomizedMechanism,
    TwoDayInstance,
    point_mass,
)
from .randsolve import solve_two_day

FAMILIES = ("harmonic", "intro_independent", "correlated", "rand_vs_det")

_BUDGETS = {"intro_independent": 10, "correlated": 5, "rand_vs_det": 4}


def pow2_distribution(a: int, b: int, scale: Fraction = ONE) -> DiscreteDistribution:
    """Geometric near-equal-revenue distribution: value scale*2^(a+i) with
    probability 2^-(i+1) for i = 0..b-a, and 0 with the leftover 2^(a-b-1)."""
    if b < a:
        raise ValueError("need b >= a")
    scale = Fraction(scale)
    if scale <= 0:
        raise ValueError("scale must be positive")
    pairs = [(scale * 2 ** (a + i), Fraction(1, 2 ** (i + 1))) for i in range(b - a + 1)]
    pairs.append((ZERO, Fraction(1, 2 ** (b - a + 1))))
    return DiscreteDistribution.from_pairs(pairs)


def equal_revenue_distribution(top: int) -> DiscreteDistribution:
    """Pr[v >= t] = 1/t on the integers 1..top: every posted price in the
    support collects exactly 1."""
    pairs = [(Fraction(t), Fraction(1, t) - Fraction(1, t + 1)) for t in range(1, top)]
    pairs.append((Fraction(top), Fraction(1, top)))
    return DiscreteDistribution.from_pairs(pairs)


@dataclass(frozen=True)
class GapFamily:
    family: str
    n: int
    instance: TwoDayInstance | None
    single_day: DiscreteDistribution | None = None
    deterministic: dict = field(default_factory=dict)
    randomized: dict = field(default_factory=dict)


def _day2_utility_price_map(day2: DiscreteDistribution, n: int, N: int):
    """Day-1 price equal to the day-2 option value at the punitive day-2
    price 2^(N - v1); reporting anything then leaves total utility at the
    buyer's day-1 value, so truth-telling costs nothing."""
    prices = {ZERO: (ZERO, NO_SALE)}
    for k in range(1, n + 1):
        v1 = Fraction(2 ** k)
        q = Fraction(2 ** (N - 2 ** k))
        p = day2.tail_area(q, NO_SALE)
        prices[v1] = (p, q)
    return prices


def _full_price_free_lottery(inst: TwoDayInstance, weight) -> RandomizedMechanism:
    """Charge the reported day-1 value outright; give the day-2 item away
    free with a report-dependent probability."""
    entries = []
    for t in sorted(inst.types, key=lambda t: t.v1):
        w = weight(t.v1)
        lot1 = ((t.v1, ONE),)
        if w >= 1:
            lot2 = ((ZERO, ONE),)
        elif w > 0:
            lot2 = ((ZERO, w), (NO_SALE, ONE - w))
        else:
            lot2 = ((NO_SALE, ONE),)
        entries.append((t.v1, lot1, lot2))
    return RandomizedMechanism(tuple(entries))


def gap_family(family: str, n: int) -> GapFamily:
    """Materialize one family member with its named candidate mechanisms."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    if family == "harmonic":
        if not 2 <= n <= 4096:
            raise ValueError("harmonic: need 2 <= n <= 4096")
        return GapFamily(family, n, None, single_day=equal_revenue_distribution(n))
    if n < 2 or n > _BUDGETS[family]:
        raise ValueError(f"{family}: need 2 <= n <= {_BUDGETS[family]}")

    if family == "intro_independent":
        N = 2 ** n
        day2 = pow2_distribution(1, N)
        day1 = pow2_distribution(1, n)
        types = tuple(BuyerType(p, v, day2) for v, p in day1.atoms)
        inst = TwoDayInstance(types)
        det = DeterministicMechanism.from_map(_day2_utility_price_map(day2, n, N))
        rand = _full_price_free_lottery(inst, lambda v1: Fraction(v1, N))
        return GapFamily(family, n, inst,
                         deterministic={"punitive-day2": det},
                         randomized={"full-price-lottery": rand})

    if family == "correlated":
        day1 = pow2_distribution(1, n)
        types = []
        for v, p in day1.atoms:
            if v == 0:
                types.append(BuyerType(p, v, point_mass(ZERO)))
            else:
                types.append(BuyerType(p, v, pow2_distribution(1, n * n, Fraction(v, n))))
        inst = TwoDayInstance(tuple(types))
        prices = {ZERO: (NO_SALE, NO_SALE)}
        for v, _ in day1.atoms:
            if v == 0:
                continue
            k = v.numerator.bit_length() - 1
            prices[v] = (v, Fraction(2 ** (n * n - n * k), n))
        det = DeterministicMechanism.from_map(prices)

        def weight(v1):
            if v1 == 0:
                return ZERO
            return Fraction(v1.numerator.bit_length() - 1, n)

        rand = _full_price_free_lottery(inst, weight)
        return GapFamily(family, n, inst,
                         deterministic={"punitive-day2": det},
                         randomized={"full-price-lottery": rand})

    # rand_vs_det: per-type day-2 supports pushed far apart
    day1 = pow2_distribution(1, n)
    types = []
    for v, p in day1.atoms:
        if v == 0:
            types.append(BuyerType(p, v, point_mass(ZERO)))
            continue
        i = v.numerator.bit_length() - 1
        live = Fraction(1, 2 ** (2 * n * n * i))
        scaled = pow2_distribution(1, n * n, Fraction(2 ** ((2 * n * n + 1) * i), n))
        pairs = [(val, live * pr) for val, pr in scaled.atoms if val > 0]
        pairs.append((ZERO, ONE - sum(pr for _, pr in pairs)))
        types.append(BuyerType(p, v, DiscreteDistribution.from_pairs(pairs)))
    inst = TwoDayInstance(tuple(types))

    def weight(v1):
        if v1 == 0:
            return ZERO
        return Fraction(v1.numerator.bit_length() - 1, n)

    rand = _full_price_free_lottery(inst, weight)
    return GapFamily("rand_vs_det", n, inst,
                     randomized={"full-price-lottery": rand})


@dataclass(frozen=True)
class GapReport:
    family: str
    n: int
    social_welfare: Fraction
    non_adaptive: Fraction
    deterministic: dict          # name -> audited revenue
    randomized: dict             # name -> audited revenue
    lp_revenue: Fraction | None  # optimal randomized revenue, when affordable
    det_opt: Fraction | None     # exact deterministic optimum, when affordable
    ratios: dict
    ladder_ok: bool
    notes: tuple[str, ...] = ()

    def lines(self):
        yield f"family {self.family} n={self.n}"
        yield f"  social welfare      {self.social_welfare}"
        yield f"  fixed prices        {self.non_adaptive}"
        for name, rev in self.deterministic.items():
            yield f"  det candidate {name:<18} {rev}"
        for name, rev in self.randomized.items():
            yield f"  rand candidate {name:<17} {rev}"
        if self.det_opt is not None:
            yield f"  deterministic opt   {self.det_opt}"
        if self.lp_revenue is not None:
            yield f"  randomized opt      {self.lp_revenue}"
        for k, v in self.ratios.items():
            yield f"  ratio {k:<18} {v} ~ {float(v):.4f}"
        yield f"  ladder ordering     {'ok' if self.ladder_ok else 'VIOLATED'}"
        for note in self.notes:
            yield f"  note: {note}"


def gap_report(fam: GapFamily, with_lp: bool | None = None,
               with_det_opt: bool | None = None) -> GapReport:
    """Audit every candidate and tabulate the exact revenue ladder."""
    if fam.family == "harmonic":
        dist = fam.single_day
        sw = dist.expectation()
        price, rev = myerson(dist)
        ratios = {"sw/posted": sw / rev}
        return GapReport(fam.family, fam.n, sw, rev, {}, {}, rev, rev,
                         ratios, ladder_ok=rev <= sw,
                         notes=(f"posted price {price} collects {rev}",))

    inst = fam.instance
    sw = inst.social_welfare()
    na = non_adaptive_opt(inst).revenue
    notes = []
    det_revs = {}
    for name, mech in fam.deterministic.items():
        rep = check_deterministic(inst, mech)
        if not rep.feasible:
            raise AssertionError(f"candidate {name} is not feasible: "
                                 + "; ".join(v.describe() for v in rep.violations))
        det_revs[name] = rep.revenue
    rand_revs = {}
    for name, mech in fam.randomized.items():
        rep = check_randomized(inst, mech)
        if not rep.feasible:
            raise AssertionError(f"candidate {name} is not feasible: "
                                 + "; ".join(v.describe() for v in rep.violations))
        rand_revs[name] = rep.revenue

    grid = len(inst.types) * (len(inst.types) + len(inst.day2_values()) + 4)
    if with_lp is None:
        with_lp = grid <= 400
    lp_rev = solve_two_day(inst)[1] if with_lp else None
    if with_det_opt is None:
        with_det_opt = len(inst.day2_values()) <= 6 and len(inst.types) <= 4
    det_opt = None
    if with_det_opt:
        try:
            det_opt = exact_small_solver(inst)[1]
        except BudgetExceeded:
            notes.append("deterministic optimum over enumeration budget")

    ladder = na <= sw
    for rev in det_revs.values():
        ladder = ladder and rev <= sw and (lp_rev is None or rev <= lp_rev)
    for rev in rand_revs.values():
        ladder = ladder and rev <= sw and (lp_rev is None or rev <= lp_rev)
    if det_opt is not None:
        ladder = ladder and na <= det_opt and all(r <= det_opt for r in det_revs.values())
        if lp_rev is not None:
            ladder = ladder and det_opt <= lp_rev
    if lp_rev is not None:
        ladder = ladder and na <= lp_rev and lp_rev <= sw

    ratios = {}
    if na > 0:
        ratios["sw/non_adaptive"] = sw / na
        if lp_rev is not None:
            ratios["randomized/non_adaptive"] = lp_rev / na
        if det_opt is not None:
            ratios["deterministic/non_adaptive"] = det_opt / na
    if det_opt is not None and det_opt > 0 and lp_rev is not None:
        ratios["randomized/deterministic"] = lp_rev / det_opt
    if lp_rev is not None and lp_rev > 0:
        ratios["sw/randomized"] = sw / lp_rev

    return GapReport(fam.family, fam.n, sw, na, det_revs, rand_revs,
                     lp_rev, det_opt, ratios, ladder, tuple(notes))
