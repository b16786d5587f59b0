"""Exact scalars, finite valuation distributions, auction instances and mechanisms.

Everything numeric is a ``fractions.Fraction``; no rounding ever happens in
core computations.  A price can also be the distinguished ``NO_SALE`` sentinel
(the item is withheld, conventionally "price infinity").  All containers are
immutable after construction, so every object here is safe to share freely
between threads.

A finite distribution induces the tail function F(x) = Pr[v >= x], a
non-increasing step function.  F is left-continuous: at an atom the atom's
mass is included (so a posted price exactly at an atom sells to that atom),
while integrals see the open-interval heights Pr[v > x].
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class SchemaError(ValueError):
    """A document failed validation; the message names the offending field."""


class _NoSale:
    """Sentinel price: the item is not offered.  Compares above every price."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_SALE"

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is NO_SALE

    def __gt__(self, other):
        return other is not NO_SALE

    def __ge__(self, other):
        return True

    def __hash__(self):
        return hash("NO_SALE")


NO_SALE = _NoSale()

Price = Union[Fraction, _NoSale]


def is_no_sale(p: Price) -> bool:
    return p is NO_SALE


def parse_rational(s, *, where: str = "value") -> Fraction:
    """Parse "num/den" or an integer string into an exact Fraction."""
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if not isinstance(s, str):
        raise SchemaError(f"{where}: malformed rational {s!r}")
    try:
        q = Fraction(s.strip())
    except (ValueError, ZeroDivisionError):
        raise SchemaError(f"{where}: malformed rational {s!r}") from None
    return q


def format_rational(q: Fraction) -> str:
    return str(q)


def parse_price(s, *, where: str = "price") -> Price:
    if isinstance(s, str) and s.strip().lower() in ("inf", "infinity"):
        return NO_SALE
    q = parse_rational(s, where=where)
    if q < 0:
        raise SchemaError(f"{where}: negative price {q}")
    return q


def format_price(p: Price) -> str:
    return "inf" if p is NO_SALE else str(p)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution over non-negative values with exact probabilities.

    Atoms are stored sorted by value, strictly increasing, each with
    probability > 0, total mass exactly 1.
    """

    atoms: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        if not self.atoms:
            raise SchemaError("distribution: no atoms")
        prev = None
        total = ZERO
        for v, p in self.atoms:
            if v < 0:
                raise SchemaError(f"distribution: negative value {v}")
            if p <= 0:
                raise SchemaError(f"distribution: atom {v} has probability {p} <= 0")
            if prev is not None and v <= prev:
                raise SchemaError("distribution: values not strictly increasing")
            prev = v
            total += p
        if total != 1:
            raise SchemaError(f"probability mass {total} ≠ 1")
        values = tuple(v for v, _ in self.atoms)
        tails = [ZERO] * (len(self.atoms) + 1)
        for i in range(len(self.atoms) - 1, -1, -1):
            tails[i] = tails[i + 1] + self.atoms[i][1]
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "_tails", tuple(tails))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Fraction, Fraction]]) -> "DiscreteDistribution":
        """Build from unsorted (value, prob) pairs, merging duplicate values."""
        acc: dict[Fraction, Fraction] = {}
        for v, p in pairs:
            acc[v] = acc.get(v, ZERO) + p
        atoms = tuple(sorted((v, p) for v, p in acc.items() if p != 0))
        return cls(atoms)

    @property
    def support(self) -> tuple[Fraction, ...]:
        return self._values

    @property
    def max_value(self) -> Fraction:
        return self._values[-1]

    def mass(self, v: Fraction) -> Fraction:
        i = bisect_left(self._values, v)
        if i < len(self._values) and self._values[i] == v:
            return self.atoms[i][1]
        return ZERO

    def tail(self, x) -> Fraction:
        """Pr[v >= x]; at an atom the atom's mass is included."""
        if x is NO_SALE:
            return ZERO
        return self._tails[bisect_left(self._values, x)]

    def tail_above(self, x: Fraction) -> Fraction:
        """Pr[v > x], the constant height of F just right of x."""
        return self._tails[bisect_right(self._values, x)]

    def expectation(self) -> Fraction:
        return sum((v * p for v, p in self.atoms), ZERO)

    def tail_area(self, a: Fraction, b: Price) -> Fraction:
        """Exact integral of the tail function F over [a, b].

        ``b`` may be NO_SALE (integrate to the end of the support; F is 0
        beyond it).  Requires 0 <= a and, for finite b, a <= b.
        """
        if a < 0:
            raise ValueError(f"tail_area: lower bound {a} < 0")
        if b is NO_SALE:
            hi = self.max_value
        else:
            if b < a:
                raise ValueError(f"tail_area: bounds {a} > {b}")
            hi = min(b, self.max_value)
        if hi <= a:
            return ZERO
        cuts = [a]
        i = bisect_right(self._values, a)
        while i < len(self._values) and self._values[i] < hi:
            cuts.append(self._values[i])
            i += 1
        cuts.append(hi)
        total = ZERO
        for lo, up in zip(cuts, cuts[1:]):
            total += (up - lo) * self.tail_above(lo)
        return total

    def signed_tail_area(self, a: Price, b: Price) -> Fraction:
        """tail_area with orientation: swapping bounds negates the result."""
        if a is NO_SALE and b is NO_SALE:
            return ZERO
        if a is NO_SALE:
            return -self.tail_area(b, NO_SALE)
        if b is NO_SALE or a <= b:
            return self.tail_area(a, b)
        return -self.tail_area(b, a)


def tail_integral(dist: DiscreteDistribution, a: Fraction, b: Price) -> Fraction:
    """Integral of the tail function of ``dist`` over [a, b], exactly."""
    return dist.tail_area(a, b)


def expectation(dist: DiscreteDistribution) -> Fraction:
    """Exact mean; equals tail_integral(dist, 0, NO_SALE)."""
    return dist.expectation()


def point_mass(v: Fraction) -> DiscreteDistribution:
    return DiscreteDistribution(((Fraction(v), ONE),))


@dataclass(frozen=True)
class BuyerType:
    prob: Fraction
    v1: Fraction
    day2: DiscreteDistribution


@dataclass(frozen=True)
class TwoDayInstance:
    """Buyer type space: per type a probability, a day-1 valuation and a
    conditional day-2 distribution.  Types are identified by their day-1
    valuation, which must be pairwise distinct."""

    types: tuple[BuyerType, ...]

    def __post_init__(self):
        if not self.types:
            raise SchemaError("instance: no types")
        total = ZERO
        seen = set()
        for i, t in enumerate(self.types):
            if t.prob <= 0:
                raise SchemaError(f"type {i}: probability {t.prob} <= 0")
            if t.v1 < 0:
                raise SchemaError(f"type {i}: negative day-1 valuation {t.v1}")
            if t.v1 in seen:
                raise SchemaError(f"type {i}: duplicate day-1 valuation {t.v1}")
            seen.add(t.v1)
            total += t.prob
        if total != 1:
            raise SchemaError(f"probability mass {total} ≠ 1")

    def type_with_v1(self, v1: Fraction) -> BuyerType:
        for t in self.types:
            if t.v1 == v1:
                return t
        raise KeyError(f"no type with day-1 valuation {v1}")

    def day1_values(self) -> tuple[Fraction, ...]:
        return tuple(sorted(t.v1 for t in self.types))

    def day2_values(self) -> tuple[Fraction, ...]:
        vals = set()
        for t in self.types:
            vals.update(t.day2.support)
        return tuple(sorted(vals))

    def day1_marginal(self) -> DiscreteDistribution:
        return DiscreteDistribution.from_pairs((t.v1, t.prob) for t in self.types)

    def day2_marginal(self) -> DiscreteDistribution:
        pairs = []
        for t in self.types:
            for v, p in t.day2.atoms:
                pairs.append((v, t.prob * p))
        return DiscreteDistribution.from_pairs(pairs)

    def social_welfare(self) -> Fraction:
        return sum((t.prob * (t.v1 + t.day2.expectation()) for t in self.types), ZERO)


Lottery = tuple[tuple[Price, Fraction], ...]


def _validate_lottery(lot: Lottery, where: str) -> Lottery:
    total = ZERO
    seen = set()
    out = []
    for price, prob in lot:
        if prob < 0:
            raise SchemaError(f"{where}: negative lottery mass {prob}")
        if price is not NO_SALE and price < 0:
            raise SchemaError(f"{where}: negative price {price}")
        key = format_price(price)
        if key in seen:
            raise SchemaError(f"{where}: duplicate lottery price {key}")
        seen.add(key)
        total += prob
        if prob > 0:
            out.append((price, prob))
    if total != 1:
        raise SchemaError(f"{where}: lottery mass {total} ≠ 1")
    return tuple(sorted(out, key=lambda e: (e[0] is NO_SALE, e[0] if e[0] is not NO_SALE else ZERO)))


@dataclass(frozen=True)
class DeterministicMechanism:
    """Per reported day-1 valuation, one day-1 price and one day-2 price."""

    entries: tuple[tuple[Fraction, Price, Price], ...]  # (v1, p, q)

    def __post_init__(self):
        seen = set()
        for v1, p, q in self.entries:
            if v1 in seen:
                raise SchemaError(f"mechanism: duplicate entry for v1={v1}")
            seen.add(v1)
            for price in (p, q):
                if price is not NO_SALE and price < 0:
                    raise SchemaError(f"mechanism: negative price for v1={v1}")
        object.__setattr__(
            self, "_by_v1", {v1: (p, q) for v1, p, q in self.entries}
        )

    @classmethod
    def from_map(cls, prices: Mapping[Fraction, tuple[Price, Price]]) -> "DeterministicMechanism":
        entries = tuple(sorted(((v1, p, q) for v1, (p, q) in prices.items()),
                               key=lambda e: e[0]))
        return cls(entries)

    def prices_for(self, v1: Fraction) -> tuple[Price, Price]:
        try:
            return self._by_v1[v1]
        except KeyError:
            raise KeyError(f"no mechanism entry for type v1={v1}") from None

    def has_entry(self, v1: Fraction) -> bool:
        return v1 in self._by_v1

    def sort_key(self):
        def pk(p):
            return (1, ZERO) if p is NO_SALE else (0, p)
        return tuple((v1, pk(p), pk(q)) for v1, p, q in self.entries)


@dataclass(frozen=True)
class RandomizedMechanism:
    """Per reported day-1 valuation, independent price lotteries for the two
    days.  Lottery masses are >= 0 and sum to exactly 1; NO_SALE mass is the
    probability of withholding the item."""

    entries: tuple[tuple[Fraction, Lottery, Lottery], ...]  # (v1, day1, day2)

    def __post_init__(self):
        seen = set()
        norm = []
        for v1, lot1, lot2 in self.entries:
            if v1 in seen:
                raise SchemaError(f"mechanism: duplicate entry for v1={v1}")
            seen.add(v1)
            norm.append((v1,
                         _validate_lottery(lot1, f"v1={v1} day1"),
                         _validate_lottery(lot2, f"v1={v1} day2")))
        object.__setattr__(self, "entries", tuple(norm))
        object.__setattr__(self, "_by_v1", {v1: (l1, l2) for v1, l1, l2 in norm})

    @classmethod
    def from_deterministic(cls, mech: DeterministicMechanism) -> "RandomizedMechanism":
        entries = tuple(
            (v1, ((p, ONE),), ((q, ONE),)) for v1, p, q in mech.entries
        )
        return cls(entries)

    def lotteries_for(self, v1: Fraction) -> tuple[Lottery, Lottery]:
        try:
            return self._by_v1[v1]
        except KeyError:
            raise KeyError(f"no mechanism entry for type v1={v1}") from None


History = tuple[tuple[Fraction, ...], ...]  # one valuation vector per elapsed day


@dataclass(frozen=True)
class MultiDayInstance:
    """Finite-horizon type space for several bidders.

    ``supports[i][d]`` lists bidder i's possible day-(d+1) valuations.
    ``conditionals`` maps each valuation-history prefix (a tuple of per-day
    vectors, empty tuple for day 1) to the distribution of the next day's
    valuation vector; each table row sums to exactly 1.
    """

    days: int
    bidders: int
    supports: tuple[tuple[tuple[Fraction, ...], ...], ...]
    conditionals: Mapping[History, tuple[tuple[tuple[Fraction, ...], Fraction], ...]]

    def __post_init__(self):
        if self.days < 1:
            raise SchemaError("instance: days must be >= 1")
        if self.bidders < 1:
            raise SchemaError("instance: bidders must be >= 1")
        if len(self.supports) != self.bidders:
            raise SchemaError("instance: supports must list every bidder")
        for i, per_day in enumerate(self.supports):
            if len(per_day) != self.days:
                raise SchemaError(f"bidder {i}: supports must list every day")
            for d, vals in enumerate(per_day):
                if not vals or list(vals) != sorted(set(vals)):
                    raise SchemaError(f"bidder {i} day {d + 1}: bad support")
                if any(v < 0 for v in vals):
                    raise SchemaError(f"bidder {i} day {d + 1}: negative value")
        for hist, rows in self.conditionals.items():
            total = ZERO
            for vec, p in rows:
                if len(vec) != self.bidders:
                    raise SchemaError(f"history {hist}: vector arity != bidders")
                if p <= 0:
                    raise SchemaError(f"history {hist}: probability {p} <= 0")
                d = len(hist)
                for i, v in enumerate(vec):
                    if v not in self.supports[i][d]:
                        raise SchemaError(f"history {hist}: value {v} off support")
                total += p
            if total != 1:
                raise SchemaError(f"history {hist}: probability mass {total} ≠ 1")

    def next_vectors(self, hist: History) -> tuple[tuple[tuple[Fraction, ...], Fraction], ...]:
        try:
            return self.conditionals[hist]
        except KeyError:
            raise KeyError(f"no conditional row for history {hist}") from None

    def paths(self, depth: int) -> list[tuple[History, Fraction]]:
        """All positive-probability valuation histories of the given depth."""
        out: list[tuple[History, Fraction]] = [((), ONE)]
        for _ in range(depth):
            nxt = []
            for hist, pr in out:
                for vec, p in self.next_vectors(hist):
                    nxt.append((hist + (vec,), pr * p))
            out = nxt
        return out


@dataclass(frozen=True)
class AdaptiveMechanism:
    """Joint outcome distributions of a multi-day auction.

    ``day_probs[d]`` maps (outcome-history, valuation-history) to the joint
    probability of that outcome history given the valuations, for histories of
    length d.  An outcome is None (no sale) or a (bidder, price) pair.
    """

    days: int
    bidders: int
    day_probs: tuple[Mapping[tuple, Fraction], ...]

    def marginals_consistent(self, inst: MultiDayInstance) -> bool:
        """Check the ignorance-about-the-future equalities exactly."""
        for d in range(1, self.days):
            table = self.day_probs[d - 1]
            nxt = self.day_probs[d]
            sums: dict[tuple, Fraction] = {}
            for (outs, hist), pr in nxt.items():
                prefix = (outs[:-1], hist[:-1])
                w = inst_prob_of_step(inst, hist)
                sums[prefix] = sums.get(prefix, ZERO) + pr * w
            for key, pr in table.items():
                if sums.get(key, ZERO) != pr:
                    return False
            for key, s in sums.items():
                if key not in table and s != 0:
                    return False
        return True


def inst_prob_of_step(inst: MultiDayInstance, hist: History) -> Fraction:
    """Pr of the last vector in ``hist`` given everything before it."""
    prefix, last = hist[:-1], hist[-1]
    for vec, p in inst.next_vectors(prefix):
        if vec == last:
            return p
    return ZERO


# ---------------------------------------------------------------------------
# JSON serialization.  Rationals are strings "num/den" or integer strings;
# "inf" denotes a withheld item.


def _atoms_to_json(dist: DiscreteDistribution):
    return [[str(v), str(p)] for v, p in dist.atoms]


def _atoms_from_json(rows, where: str) -> DiscreteDistribution:
    if not isinstance(rows, list) or not rows:
        raise SchemaError(f"{where}: expected a non-empty list of [value, prob] pairs")
    pairs = []
    seen = set()
    for j, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 2:
            raise SchemaError(f"{where}[{j}]: expected [value, prob]")
        v = parse_rational(row[0], where=f"{where}[{j}].value")
        p = parse_rational(row[1], where=f"{where}[{j}].prob")
        if v < 0:
            raise SchemaError(f"{where}[{j}]: negative value {v}")
        if p <= 0:
            raise SchemaError(f"{where}[{j}]: probability {p} ≤ 0")
        if v in seen:
            raise SchemaError(f"{where}[{j}]: duplicate value {v}")
        seen.add(v)
        pairs.append((v, p))
    pairs.sort()
    total = sum(p for _, p in pairs)
    if total != 1:
        raise SchemaError(f"probability mass {total} ≠ 1")
    return DiscreteDistribution(tuple(pairs))


def _hist_key(hist: History) -> str:
    return "|".join(",".join(str(v) for v in vec) for vec in hist)


def _hist_from_key(key: str, bidders: int, where: str) -> History:
    if key == "":
        return ()
    out = []
    for part in key.split("|"):
        vals = tuple(parse_rational(x, where=where) for x in part.split(","))
        if len(vals) != bidders:
            raise SchemaError(f"{where}: history vector arity != bidders")
        out.append(vals)
    return tuple(out)


def serialize_instance(inst) -> str:
    """Canonical JSON text for an instance; round-trips bit-exactly."""
    if isinstance(inst, TwoDayInstance):
        doc = {
            "days": 2,
            "types": [
                {"prob": str(t.prob), "v1": str(t.v1), "day2": _atoms_to_json(t.day2)}
                for t in sorted(inst.types, key=lambda t: t.v1)
            ],
        }
    elif isinstance(inst, MultiDayInstance):
        doc = {
            "days": inst.days,
            "bidders": inst.bidders,
            "supports": [
                [[str(v) for v in day] for day in per_bidder]
                for per_bidder in inst.supports
            ],
            "conditionals": {
                _hist_key(h): [[[str(v) for v in vec], str(p)] for vec, p in rows]
                for h, rows in sorted(inst.conditionals.items(), key=lambda kv: _hist_key(kv[0]))
            },
        }
    else:
        raise TypeError(f"not an instance: {type(inst)}")
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def parse_instance(document):
    """Parse a JSON instance document (text or already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not valid JSON: {e}") from None
    else:
        doc = document
    if not isinstance(doc, dict) or "days" not in doc:
        raise SchemaError("instance: missing \"days\"")
    if "bidders" in doc or "supports" in doc or "conditionals" in doc:
        return _parse_multi_day(doc)
    if doc["days"] != 2:
        raise SchemaError("instance: two-day schema requires days = 2")
    if "types" not in doc or not isinstance(doc["types"], list) or not doc["types"]:
        raise SchemaError("instance: missing \"types\"")
    types = []
    total = ZERO
    seen = set()
    for i, row in enumerate(doc["types"]):
        prob = parse_rational(row.get("prob"), where=f"type {i}.prob")
        v1 = parse_rational(row.get("v1"), where=f"type {i}.v1")
        if prob <= 0:
            raise SchemaError(f"type {i}: probability {prob} ≤ 0")
        if v1 < 0:
            raise SchemaError(f"type {i}: negative day-1 valuation {v1}")
        if v1 in seen:
            raise SchemaError(f"type {i}: duplicate day-1 valuation {v1}")
        seen.add(v1)
        total += prob
        types.append(BuyerType(prob, v1, _atoms_from_json(row.get("day2"), f"type {i}.day2")))
    if total != 1:
        raise SchemaError(f"probability mass {total} ≠ 1")
    return TwoDayInstance(tuple(sorted(types, key=lambda t: t.v1)))


def _parse_multi_day(doc) -> MultiDayInstance:
    days = doc.get("days")
    bidders = doc.get("bidders")
    if not isinstance(days, int) or days < 1:
        raise SchemaError("instance: bad \"days\"")
    if not isinstance(bidders, int) or bidders < 1:
        raise SchemaError("instance: bad \"bidders\"")
    raw_supports = doc.get("supports")
    if not isinstance(raw_supports, list) or len(raw_supports) != bidders:
        raise SchemaError("instance: \"supports\" must list every bidder")
    supports = tuple(
        tuple(tuple(sorted(parse_rational(v, where=f"supports[{i}][{d}]") for v in day))
              for d, day in enumerate(per))
        for i, per in enumerate(raw_supports)
    )
    raw_cond = doc.get("conditionals")
    if not isinstance(raw_cond, dict):
        raise SchemaError("instance: missing \"conditionals\"")
    conditionals = {}
    for key, rows in raw_cond.items():
        hist = _hist_from_key(key, bidders, f"conditionals[{key!r}]")
        parsed = []
        for j, row in enumerate(rows):
            vec = tuple(parse_rational(v, where=f"conditionals[{key!r}][{j}]") for v in row[0])
            p = parse_rational(row[1], where=f"conditionals[{key!r}][{j}].prob")
            parsed.append((vec, p))
        conditionals[hist] = tuple(parsed)
    return MultiDayInstance(days, bidders, supports, conditionals)


def serialize_mechanism(mech) -> str:
    if isinstance(mech, DeterministicMechanism):
        doc = {
            "kind": "deterministic",
            "prices": [
                {"v1": str(v1), "p": format_price(p), "q": format_price(q)}
                for v1, p, q in sorted(mech.entries, key=lambda e: e[0])
            ],
        }
    elif isinstance(mech, RandomizedMechanism):
        doc = {
            "kind": "randomized",
            "lotteries": [
                {
                    "v1": str(v1),
                    "day1": [[format_price(p), str(w)] for p, w in lot1],
                    "day2": [[format_price(p), str(w)] for p, w in lot2],
                }
                for v1, lot1, lot2 in sorted(mech.entries, key=lambda e: e[0])
            ],
        }
    else:
        raise TypeError(f"not a mechanism: {type(mech)}")
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def parse_mechanism(document):
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not valid JSON: {e}") from None
    else:
        doc = document
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "deterministic":
        entries = []
        for i, row in enumerate(doc.get("prices", [])):
            v1 = parse_rational(row.get("v1"), where=f"prices[{i}].v1")
            p = parse_price(row.get("p"), where=f"prices[{i}].p")
            q = parse_price(row.get("q"), where=f"prices[{i}].q")
            entries.append((v1, p, q))
        return DeterministicMechanism(tuple(sorted(entries, key=lambda e: e[0])))
    if kind == "randomized":
        entries = []
        for i, row in enumerate(doc.get("lotteries", [])):
            v1 = parse_rational(row.get("v1"), where=f"lotteries[{i}].v1")
            lot1 = tuple(
                (parse_price(p, where=f"lotteries[{i}].day1"), parse_rational(w, where=f"lotteries[{i}].day1"))
                for p, w in row.get("day1", [])
            )
            lot2 = tuple(
                (parse_price(p, where=f"lotteries[{i}].day2"), parse_rational(w, where=f"lotteries[{i}].day2"))
                for p, w in row.get("day2", [])
            )
            entries.append((v1, lot1, lot2))
        return RandomizedMechanism(tuple(sorted(entries, key=lambda e: e[0])))
    raise SchemaError("mechanism: \"kind\" must be deterministic or randomized")
