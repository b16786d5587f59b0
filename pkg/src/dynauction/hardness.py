"""Graph-to-auction reduction gadgets.

From a graph, build a two-day instance in which one heavy type anchors the
price structure and each vertex becomes a light type with two candidate
price pairs: the greedy pair (full day-1 value, low day-2 price) and the
fallback pair (slightly discounted day-1, higher day-2).  The day-2 tail
functions are staircases whose band heights depend on the graph's edges so
that two adjacent vertices can never both take their greedy pair, while the
greedy pair is worth exactly the same fixed bonus for every vertex.  The
best feasible revenue is then an affine function of the maximum independent
set size.

All quantities are exact rationals.  The staircase tail count is capped so
that every band parameter stays positive at small vertex counts (the
uncapped count makes the recursion for the per-vertex revenue differences go
negative below roughly thirty vertices); the cap changes none of the band
and area identities that feasibility rests on, only the asymptotic
price-dominance margins, which the verification report tracks separately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .audit import check_deterministic
from .model import (
    NO_SALE,
    ONE,
    ZERO,
    BuyerType,
    DeterministicMechanism,
    DiscreteDistribution,
    Price,
    SchemaError,
    TwoDayInstance,
    is_no_sale,
    parse_rational,
)


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset  # unordered pairs (i, j), 1-indexed, i < j

    def __post_init__(self):
        norm = set()
        for e in self.edges:
            i, j = e
            if i == j:
                raise SchemaError(f"graph: self-loop at {i}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise SchemaError(f"graph: edge {e} out of range")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    @classmethod
    def from_json(cls, document) -> "Graph":
        doc = json.loads(document) if isinstance(document, (str, bytes)) else document
        if not isinstance(doc, dict) or "n" not in doc:
            raise SchemaError("graph: missing \"n\"")
        edges = frozenset(tuple(e) for e in doc.get("edges", []))
        return cls(int(doc["n"]), edges)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "edges": sorted(list(e) for e in self.edges)}) + "\n"


@dataclass(frozen=True)
class HardnessInstance:
    graph: Graph
    instance: TwoDayInstance
    params: dict

    @property
    def heavy_type(self) -> BuyerType:
        return self.instance.type_with_v1(self.params["P*"])

    def vertex_type(self, i: int) -> BuyerType:
        return self.instance.type_with_v1(self.params["B"][i])


def _tail_steps_cap(n: int, Z: Fraction, gamma: Fraction, c: Fraction) -> int:
    """Largest usable staircase count: the band-difference recursion must
    keep every level positive, i.e. K < 4Z(g-1)(g^4-1)g^{4n} / (c(g^{4n}-1));
    half of that is used for slack, never more than the nominal
    ceil(8 g^{4(n+1)})."""
    g4n = gamma ** (4 * n)
    limit = 4 * Z * (gamma - 1) * (gamma ** 4 - 1) * g4n / (c * (g4n - 1))
    k_pos = math.ceil(limit) - 1
    nominal = math.ceil(8 * gamma ** (4 * (n + 1)))
    k = min(nominal, k_pos // 2)
    if k < 1:
        raise ValueError(f"no usable staircase count for n={n}")
    return k


def _distribution_from_bands(bands: list[tuple[Fraction, Fraction]]) -> DiscreteDistribution:
    """Bands are (upper_bound, height) segments covering (prev, ub]; heights
    weakly decreasing, zero beyond the last bound.  Atoms sit where the
    height drops."""
    merged: list[tuple[Fraction, Fraction]] = []
    for ub, h in bands:
        if merged and merged[-1][1] == h:
            merged[-1] = (ub, h)
        else:
            if merged and not h < merged[-1][1]:
                raise ValueError("tail heights must be non-increasing")
            merged.append((ub, h))
    pairs = [(ZERO, ONE - merged[0][1])]
    for k, (ub, h) in enumerate(merged):
        nxt = merged[k + 1][1] if k + 1 < len(merged) else ZERO
        pairs.append((ub, h - nxt))
    return DiscreteDistribution.from_pairs([(v, p) for v, p in pairs if p > 0])


def generate(g: Graph) -> HardnessInstance:
    """Materialize the reduction instance for a graph on n >= 2 vertices."""
    n = g.n
    if n < 2:
        raise ValueError("need at least 2 vertices")
    gamma = ONE + Fraction(1, n)
    eps = Fraction(1, n * n)
    B = {i: Fraction(n * n + 2 * n + 1 - i) for i in range(1, n + 2)}
    A = {i: B[i] - eps for i in range(1, n + 2)}
    P_star = Fraction(n)
    Z = A[n + 1] - P_star  # total staircase area of every tail
    h = {i: gamma ** (-4 * i) for i in range(1, n + 2)}
    c = (gamma - 1) * (eps * (gamma ** 3 - gamma) + gamma)
    K = _tail_steps_cap(n, Z, gamma, c)
    r = {n + 1: 4 * Z * (gamma - 1) / K}
    for i in range(n, 0, -1):
        r[i] = gamma ** 4 * r[i + 1] - c
    if any(r[i] <= 0 for i in r):
        raise AssertionError("band-difference levels not positive")
    C = {i: (gamma / (gamma - 1) * r[i] - eps) / h[i] for i in range(1, n + 2)}
    D = {i: gamma * r[i] / ((gamma - 1) * h[i]) for i in range(1, n + 2)}
    Q_star = 2 ** K * D[n + 1]
    h_star = Z / (Q_star - D[n + 1])
    r_norm = ONE / sum(ONE / r[i] for i in range(1, n + 1))
    w = {i: r_norm / r[i] for i in range(1, n + 1)}
    p = eps / (16 * n * r_norm)

    # ordering sanity, exact
    chain = [P_star] + [x for i in range(n, 0, -1) for x in (A[i], B[i])]
    assert all(a < b for a, b in zip(chain, chain[1:]))
    chain2 = [x for i in range(1, n + 2) for x in (C[i], D[i])] + [Q_star]
    assert all(a < b for a, b in zip(chain2, chain2[1:]))

    def vertex_tail(i: int) -> DiscreteDistribution:
        bands = [(C[i], h[i]), (D[i], h[i] / gamma)]
        for j in range(i + 1, n + 2):
            edge = j <= n and g.has_edge(i, j)
            if j == i + 1:
                lower = h[i] / gamma ** 2 if edge \
                    else (ONE - eps / gamma) / (ONE - eps) * h[i] / gamma ** 2
            else:
                lower = (ONE - eps * (2 - ONE / gamma)) / (ONE - eps) * h[j - 1] / gamma ** 2 \
                    if edge else h[j - 1] / gamma ** 2
            upper = (2 - ONE / gamma) * h[j] if edge else h[j]
            bands.append((C[j], lower))
            bands.append((D[j], upper))
        for k in range(1, K + 1):
            bands.append((2 ** k * D[n + 1], h[n + 1] / (2 ** (k + 1) * gamma)))
        return _distribution_from_bands(bands)

    def heavy_tail() -> DiscreteDistribution:
        bands = [(C[1], h[1])]
        for i in range(1, n + 2):
            bands.append((D[i], h[i]))
            if i <= n:
                bands.append((C[i + 1], h[i] / gamma ** 2))
        bands.append((Q_star, h_star))
        return _distribution_from_bands(bands)

    types = [BuyerType(ONE - p, P_star, heavy_tail())]
    for i in range(1, n + 1):
        types.append(BuyerType(p * w[i], B[i], vertex_tail(i)))
    inst = TwoDayInstance(tuple(sorted(types, key=lambda t: t.v1)))
    params = {
        "n": n, "gamma": gamma, "eps": eps, "p": p, "r": r_norm, "K": K,
        "recursion": "eq1",
        "B": B, "A": A, "C": C, "D": D, "h": h, "h*": h_star,
        "r_i": r, "w": w, "P*": P_star, "Q*": Q_star, "Z": Z,
    }
    return HardnessInstance(g, inst, params)


def _rev_pair(t: BuyerType, p: Price, q: Price) -> Fraction:
    rev = ZERO
    if not is_no_sale(p) and p <= t.v1:
        rev += p
    if not is_no_sale(q):
        rev += q * t.day2.tail(q)
    return rev


def completeness_pricing(h: HardnessInstance, S) -> DeterministicMechanism:
    """Greedy pair for vertices in S, fallback pair elsewhere, anchor prices
    for the heavy type."""
    P = h.params
    prices = {P["P*"]: (P["P*"], P["Q*"])}
    for i in range(1, P["n"] + 1):
        if i in S:
            prices[P["B"][i]] = (P["B"][i], P["C"][i])
        else:
            prices[P["B"][i]] = (P["A"][i], P["D"][i])
    return DeterministicMechanism.from_map(prices)


def predicted_revenue(h: HardnessInstance, S) -> Fraction:
    """Revenue of the completeness pricing for an independent set S: base
    term plus a fixed bonus per chosen vertex."""
    P = h.params
    base = (ONE - P["p"]) * _rev_pair(h.heavy_type, P["P*"], P["Q*"])
    for i in range(1, P["n"] + 1):
        base += P["p"] * P["w"][i] * _rev_pair(h.vertex_type(i), P["A"][i], P["D"][i])
    return base + P["p"] * P["r"] * len(S)


def brute_max_independent_set(g: Graph) -> tuple[int, frozenset]:
    """Exhaustive maximum independent set (branch on a highest-degree
    vertex); fine up to a few dozen vertices."""
    if g.n > 24:
        raise ValueError("graph too large for exhaustive search")
    adj = {i: set() for i in range(1, g.n + 1)}
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)

    def rec(remaining: frozenset) -> frozenset:
        if not remaining:
            return frozenset()
        v = max(remaining, key=lambda u: (len(adj[u] & remaining), -u))
        without = rec(remaining - {v})
        with_v = rec(remaining - {v} - adj[v]) | {v}
        if len(with_v) >= len(without):
            return with_v
        return without

    best = rec(frozenset(range(1, g.n + 1)))
    return len(best), best


def independent_sets(g: Graph):
    """All independent sets, small graphs only."""
    out = []
    verts = list(range(1, g.n + 1))
    for mask in range(2 ** g.n):
        S = frozenset(v for k, v in enumerate(verts) if mask >> k & 1)
        if all(not (i in S and j in S) for i, j in g.edges):
            out.append(S)
    return out


@dataclass(frozen=True)
class CheckLine:
    name: str
    ok: bool
    lhs: Fraction | None = None
    rhs: Fraction | None = None

    def describe(self) -> str:
        mark = "ok " if self.ok else "FAIL"
        tail = "" if self.lhs is None else f"  lhs={self.lhs} rhs={self.rhs}"
        return f"[{mark}] {self.name}{tail}"


@dataclass(frozen=True)
class VerificationReport:
    identity_checks: tuple[CheckLine, ...]
    completeness_checks: tuple[CheckLine, ...]
    edge_checks: tuple[CheckLine, ...]
    dominance_checks: tuple[CheckLine, ...]   # asymptotic price-dominance margins
    margin_checks: tuple[CheckLine, ...]

    @property
    def core_ok(self) -> bool:
        """Everything the reduction's feasibility direction rests on."""
        return all(c.ok for c in
                   self.identity_checks + self.completeness_checks
                   + self.edge_checks + self.margin_checks)

    @property
    def all_ok(self) -> bool:
        return self.core_ok and all(c.ok for c in self.dominance_checks)

    def lines(self):
        yield from self.identity_checks
        yield from self.completeness_checks
        yield from self.edge_checks
        yield from self.margin_checks
        yield from self.dominance_checks


def verify_construction(h: HardnessInstance) -> VerificationReport:
    """Exact re-check of every identity the reduction uses: band areas, the
    per-vertex bonus, feasibility of every independent set's pricing,
    infeasibility across every edge, and the price-dominance spot checks
    (the latter hold only at large vertex counts and are reported
    separately)."""
    P = h.params
    g = h.graph
    n = P["n"]
    gamma, eps = P["gamma"], P["eps"]
    A, B, C, D = P["A"], P["B"], P["C"], P["D"]
    Z, Q_star, P_star = P["Z"], P["Q*"], P["P*"]
    ident: list[CheckLine] = []

    def check(name, lhs, rhs):
        ident.append(CheckLine(name, lhs == rhs, lhs, rhs))

    # recursion, in both printed forms (they coincide after exact algebra)
    for i in range(1, n + 1):
        lhs = gamma * P["r_i"][i] + (gamma - 1) * (eps * (gamma ** 4 - gamma ** 2) + gamma ** 2)
        check(f"recursion-product-form i={i}", lhs, gamma ** 5 * P["r_i"][i + 1])

    for i in range(1, n + 1):
        Fi = h.vertex_type(i).day2
        check(f"area F_{i} C{i}..D{i}", Fi.tail_area(C[i], D[i]), eps / gamma)
        for j in range(i + 1, n + 2):
            edge = j <= n and g.has_edge(i, j)
            lo = Fi.tail_area(D[j - 1], C[j])
            hi = Fi.tail_area(C[j], D[j])
            if j == i + 1:
                check(f"area F_{i} D{j-1}..C{j}", lo, 1 - eps if edge else 1 - eps / gamma)
            else:
                check(f"area F_{i} D{j-1}..C{j}", lo,
                      1 - (2 - 1 / gamma) * eps if edge else 1 - eps)
            check(f"area F_{i} C{j}..D{j}", hi, (2 - 1 / gamma) * eps if edge else eps)
            check(f"area F_{i} C{i}..D{j}", Fi.tail_area(C[i], D[j]), B[i] - A[j])
        check(f"area F_{i} tail", Fi.tail_area(D[n + 1], Q_star), Z)
        check(f"area F_{i} C{i}..Q*", Fi.tail_area(C[i], Q_star), B[i] - P_star)

    Fs = h.heavy_type.day2
    for i in range(1, n + 1):
        check(f"area F* C{i}..D{i}", Fs.tail_area(C[i], D[i]), eps)
        check(f"area F* D{i}..C{i+1}", Fs.tail_area(D[i], C[i + 1]), 1 - eps)
        check(f"area F* C{i}..C{i+1}", Fs.tail_area(C[i], C[i + 1]), ONE)
        check(f"area F* C{i}..Q*", Fs.tail_area(C[i], Q_star), B[i] - P_star)
    check("area F* tail", Fs.tail_area(D[n + 1], Q_star), Z)

    completeness: list[CheckLine] = []
    sets = independent_sets(g) if n <= 5 else [frozenset(), brute_max_independent_set(g)[1]]
    for S in sorted(sets, key=lambda s: (len(s), sorted(s))):
        mech = completeness_pricing(h, S)
        report = check_deterministic(h.instance, mech)
        label = "{" + ",".join(str(v) for v in sorted(S)) + "}"
        completeness.append(CheckLine(f"feasible S={label}", report.feasible))
        completeness.append(CheckLine(
            f"revenue S={label}", report.revenue == predicted_revenue(h, S),
            report.revenue, predicted_revenue(h, S)))

    edge_checks: list[CheckLine] = []
    for (i, j) in sorted(g.edges):
        mech = completeness_pricing(h, {i, j})
        report = check_deterministic(h.instance, mech)
        bad_pair = any(
            set(v.types) == {B[i], B[j]} for v in report.violations
        )
        edge_checks.append(CheckLine(
            f"edge ({i},{j}) greedy pricing infeasible",
            (not report.feasible) and bad_pair))

    margin: list[CheckLine] = []
    sum_eps_r = sum(eps / P["r_i"][i] for i in range(1, n + 1))
    margin.append(CheckLine("per-vertex bonus dominates pair differences",
                            sum_eps_r < 1, sum_eps_r, ONE))
    for size in (0, 1):
        S0 = frozenset()
        S1 = frozenset([1])
        margin.append(CheckLine(
            "bonus per vertex is p*r",
            predicted_revenue(h, S1) - predicted_revenue(h, S0) == P["p"] * P["r"],
            predicted_revenue(h, S1) - predicted_revenue(h, S0), P["p"] * P["r"]))
        break

    dominance: list[CheckLine] = []
    t_star = h.heavy_type
    rev_q = Q_star * Fs.tail(Q_star)
    for i in range(1, n + 1):
        for name, x in ((f"C{i}", C[i]), (f"D{i}", D[i])):
            rv = x * Fs.tail(x)
            dominance.append(CheckLine(
                f"heavy day-2 price Q* beats {name}", rev_q > rv, rev_q, rv))
    for i in range(1, n + 1):
        Fi = h.vertex_type(i).day2
        rev_c = C[i] * Fi.tail(C[i])
        ok = True
        worst = None
        for x in Fi.support:
            if x == C[i] or x <= 0:
                continue
            rv = x * Fi.tail(x)
            if not rev_c > rv:
                ok = False
                worst = (x, rv)
                break
        dominance.append(CheckLine(
            f"vertex {i} day-2 price C{i} beats the rest", ok,
            rev_c, worst[1] if worst else None))

    return VerificationReport(tuple(ident), tuple(completeness),
                              tuple(edge_checks), tuple(dominance),
                              tuple(margin))
