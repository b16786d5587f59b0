"""Exact-rational linear programming.

A dense two-phase tableau simplex over exact rationals with Bland's
smallest-index pivot rule (degeneracy under exact arithmetic makes cycling a
real risk, and correctness matters more than speed at the sizes solved here).
Phase 1 uses auxiliary variables; there is no presolve beyond dropping empty
rows, so identical problems produce identical solutions.

Every Optimal answer is certified before it is returned: the assignment is
re-substituted into the original constraints, and dual feasibility is checked
against the original data via multipliers read off the final basis inverse.

Tableau arithmetic uses gmpy2.mpq when available (several times faster than
fractions.Fraction); the public API speaks Fraction either way.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _Q = Fraction

_Q0 = _Q(0)
_Q1 = _Q(1)

DEFAULT_BUDGET = int(os.environ.get("DYNAUCTION_BUDGET", "2000000"))

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpBudgetError(RuntimeError):
    """The pivot count exceeded the configured cap."""


class LpCertificationError(AssertionError):
    """An internal consistency check on a solved program failed."""


def _to_q(x) -> "_Q":
    if isinstance(x, Fraction):
        return _Q(x.numerator, x.denominator)
    return _Q(x)


def _to_fraction(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


@dataclass
class LpProblem:
    """A sparse maximization problem over named rational variables."""

    name: str = "lp"
    var_names: list = field(default_factory=list)
    lower: list = field(default_factory=list)   # Fraction or None (free)
    upper: list = field(default_factory=list)   # Fraction or None
    objective: dict = field(default_factory=dict)          # index -> Fraction
    rows: list = field(default_factory=list)               # (coeffs dict, rel, rhs)
    _index: dict = field(default_factory=dict)

    def add_var(self, name: str, lb=Fraction(0), ub=None, free: bool = False) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lower.append(None if free else Fraction(lb))
        self.upper.append(None if ub is None else Fraction(ub))
        self._index[name] = idx
        return idx

    def var(self, name: str) -> int:
        return self._index[name]

    def add_objective(self, idx: int, coef) -> None:
        if coef:
            self.objective[idx] = self.objective.get(idx, Fraction(0)) + Fraction(coef)

    def add_constraint(self, coeffs: dict, rel: str, rhs) -> None:
        if rel not in ("<=", "=", ">="):
            raise ValueError(f"bad relation {rel!r}")
        clean = {j: Fraction(c) for j, c in coeffs.items() if c}
        for j in clean:
            if not 0 <= j < len(self.var_names):
                raise ValueError(f"constraint references undeclared variable {j}")
        if not clean:
            # empty row: keep it only if it is unsatisfiable
            r = Fraction(rhs)
            ok = {"<=": 0 <= r, "=": r == 0, ">=": 0 >= r}[rel]
            if ok:
                return
        self.rows.append((clean, rel, Fraction(rhs)))


@dataclass(frozen=True)
class LpSolution:
    status: str
    assignment: dict                    # name -> Fraction (empty unless optimal)
    objective_value: Fraction | None
    pivots: int

    def __getitem__(self, name: str) -> Fraction:
        return self.assignment[name]

    def value(self, name: str) -> Fraction:
        return self.assignment.get(name, Fraction(0))


def solve_lp(problem: LpProblem, pivot_cap: int | None = None) -> LpSolution:
    """Solve ``problem`` exactly.  Optimal solutions are certified; statuses
    Infeasible/Unbounded are returned, not raised."""
    cap = pivot_cap if pivot_cap is not None else DEFAULT_BUDGET
    n_orig = len(problem.var_names)

    # Standard form: every original variable becomes one shifted nonnegative
    # column (x = y + lb) or a pair y+ - y- when free; finite upper bounds
    # become rows.
    col_of = []           # per original var: ("shift", col, lb) or ("split", c+, c-)
    std_cols = 0
    for j in range(n_orig):
        lb = problem.lower[j]
        if lb is None:
            col_of.append(("split", std_cols, std_cols + 1))
            std_cols += 2
        else:
            col_of.append(("shift", std_cols, lb))
            std_cols += 1

    def expand(coeffs: dict):
        """Map original-variable coefficients to standard columns plus the
        constant contributed by lower-bound shifts."""
        out = {}
        const = Fraction(0)
        for j, c in coeffs.items():
            kind = col_of[j]
            if kind[0] == "shift":
                out[kind[1]] = out.get(kind[1], Fraction(0)) + c
                const += c * kind[2]
            else:
                out[kind[1]] = out.get(kind[1], Fraction(0)) + c
                out[kind[2]] = out.get(kind[2], Fraction(0)) - c
        return out, const

    std_rows = []  # (dense-ish dict, rel, rhs)
    for coeffs, rel, rhs in problem.rows:
        cc, const = expand(coeffs)
        std_rows.append((cc, rel, rhs - const))
    for j in range(n_orig):
        ub = problem.upper[j]
        if ub is not None:
            cc, const = expand({j: Fraction(1)})
            std_rows.append((cc, "<=", ub - const))

    obj_cols, obj_const = expand(problem.objective)

    m = len(std_rows)
    # unit block: one slack or artificial per row, so the final tableau holds
    # the basis inverse in these columns
    total_cols = std_cols + m
    tableau = []
    basis = []
    artificial = set()
    for i, (cc, rel, rhs) in enumerate(std_rows):
        sign = 1
        if rhs < 0:
            sign = -1
            rhs = -rhs
            rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        row = [_Q0] * (total_cols + 1)
        for j, c in cc.items():
            row[j] = _to_q(sign * c)
        row[-1] = _to_q(rhs)
        unit_col = std_cols + i
        if rel == "<=":
            row[unit_col] = _Q1
        elif rel == "=":
            row[unit_col] = _Q1
            artificial.add(unit_col)
        else:  # ">=": surplus column appended later, artificial in unit block
            row[unit_col] = _Q1
            artificial.add(unit_col)
        basis.append(unit_col)
        tableau.append(row)

    # surplus columns for >= rows
    surplus_of = {}
    extra = []
    for i, (cc, rel, rhs) in enumerate(std_rows):
        effective_rel = rel
        if std_rows[i][2] < 0:
            effective_rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        if effective_rel == ">=":
            surplus_of[i] = total_cols + len(extra)
            extra.append(i)
    if extra:
        for row in tableau:
            row[-1:-1] = [_Q0] * len(extra)
        for k, i in enumerate(extra):
            tableau[i][total_cols + k] = -_Q1
        total_cols += len(extra)

    pivots = 0

    def pivot(r: int, c: int):
        nonlocal pivots
        pivots += 1
        if pivots > cap:
            raise LpBudgetError(
                f"{problem.name}: pivot count exceeded cap {cap}"
            )
        prow = tableau[r]
        piv = prow[c]
        if piv != 1:
            inv = _Q1 / piv
            tableau[r] = prow = [v * inv for v in prow]
        for i, row in enumerate(tableau):
            if i != r:
                f = row[c]
                if f:
                    tableau[i] = [a - f * b for a, b in zip(row, prow)]
        f = obj_row[c]
        if f:
            obj_row[:] = [a - f * b for a, b in zip(obj_row, prow)]
        basis[r] = c

    def run(allowed):
        """Bland's rule: enter the smallest improving column, leave by the
        smallest-index basic variable among the minimum ratios."""
        while True:
            enter = -1
            for j in allowed:
                if obj_row[j] > 0:
                    enter = j
                    break
            if enter < 0:
                return OPTIMAL
            leave = -1
            best = None
            for i, row in enumerate(tableau):
                a = row[enter]
                if a > 0:
                    ratio = row[-1] / a
                    if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                        best = ratio
                        leave = i
            if leave < 0:
                return UNBOUNDED
            pivot(leave, enter)

    # Phase 1: drive artificials to zero.
    if artificial:
        obj_row = [_Q0] * (total_cols + 1)
        for i, row in enumerate(tableau):
            if basis[i] in artificial:
                obj_row = [a + b for a, b in zip(obj_row, row)]
        for c in artificial:
            obj_row[c] = _Q0
        status = run([j for j in range(total_cols) if j not in artificial])
        if status == UNBOUNDED:  # pragma: no cover - phase 1 is bounded
            raise LpCertificationError("phase 1 unbounded")
        if obj_row[-1] != 0:
            return LpSolution(INFEASIBLE, {}, None, pivots)
        # pivot remaining artificials out of the basis where possible
        for i in range(m):
            if basis[i] in artificial:
                for j in range(total_cols):
                    if j not in artificial and tableau[i][j] != 0:
                        pivot(i, j)
                        break

    # Phase 2.
    cost = [_Q0] * total_cols
    for j, c in obj_cols.items():
        cost[j] = _to_q(c)
    obj_row = list(cost) + [_Q0]
    for i, row in enumerate(tableau):
        cb = cost[basis[i]]
        if cb:
            obj_row = [a - cb * b for a, b in zip(obj_row, row)]
    status = run([j for j in range(total_cols) if j not in artificial])
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, {}, None, pivots)

    # Extract the standard-form solution.
    std_x = [Fraction(0)] * total_cols
    for i, row in enumerate(tableau):
        if basis[i] in artificial and row[-1] != 0:  # pragma: no cover
            raise LpCertificationError("artificial variable stuck at nonzero")
        std_x[basis[i]] = _to_fraction(row[-1])
    assignment = {}
    for j in range(n_orig):
        kind = col_of[j]
        if kind[0] == "shift":
            assignment[problem.var_names[j]] = std_x[kind[1]] + kind[2]
        else:
            assignment[problem.var_names[j]] = std_x[kind[1]] - std_x[kind[2]]
    objective_value = sum(
        (Fraction(c) * assignment[problem.var_names[j]] for j, c in problem.objective.items()),
        Fraction(0),
    )

    _certify(problem, assignment, std_rows, std_cols, surplus_of, artificial,
             cost, tableau, basis, obj_cols, total_cols, m)
    return LpSolution(OPTIMAL, assignment, objective_value, pivots)


def _certify(problem, assignment, std_rows, std_cols, surplus_of, artificial,
             cost, tableau, basis, obj_cols, total_cols, m):
    """Exact optimality certificate, checked against the original data."""
    # Primal: replug the assignment into every declared constraint and bound.
    for coeffs, rel, rhs in problem.rows:
        lhs = sum(
            (Fraction(c) * assignment[problem.var_names[j]] for j, c in coeffs.items()),
            Fraction(0),
        )
        ok = {"<=": lhs <= rhs, "=": lhs == rhs, ">=": lhs >= rhs}[rel]
        if not ok:
            raise LpCertificationError(
                f"{problem.name}: constraint {rel} {rhs} violated, lhs={lhs}"
            )
    for j, name in enumerate(problem.var_names):
        v = assignment[name]
        lb, ub = problem.lower[j], problem.upper[j]
        if lb is not None and v < lb:
            raise LpCertificationError(f"{problem.name}: {name} below lower bound")
        if ub is not None and v > ub:
            raise LpCertificationError(f"{problem.name}: {name} above upper bound")

    # Dual: multipliers y = c_B * Binv, with Binv read off the unit-block
    # columns of the final tableau; reduced costs are recomputed from the
    # original standard-form columns, never from tableau increments.
    y = [_Q0] * m
    for i in range(m):
        cb = cost[basis[i]]
        if cb:
            row = tableau[i]
            for r in range(m):
                v = row[std_cols + r]
                if v:
                    y[r] += cb * v
    col_data = {}
    for i, (cc, _, rhs) in enumerate(std_rows):
        sign = -1 if rhs < 0 else 1
        for j, c in cc.items():
            col_data.setdefault(j, []).append((i, _to_q(sign * c)))
    for j in range(std_cols):
        red = cost[j] - sum((y[i] * a for i, a in col_data.get(j, [])), _Q0)
        if red > 0:
            raise LpCertificationError(
                f"{problem.name}: dual infeasibility at column {j}: {red}"
            )
    # unit-block slack columns (artificials are banned, surplus handled below)
    for i in range(m):
        col = std_cols + i
        if col in artificial:
            continue
        if cost[col] - y[i] > 0:
            raise LpCertificationError(
                f"{problem.name}: dual infeasibility at slack of row {i}"
            )
    for i, col in surplus_of.items():
        if cost[col] + y[i] > 0:
            raise LpCertificationError(
                f"{problem.name}: dual infeasibility at surplus of row {i}"
            )


def dump_lp(problem: LpProblem) -> str:
    """Render the program in LP interchange text.  Decimal rendering is
    lossy; this dump is for external cross-checking only."""
    def dec(q: Fraction) -> str:
        return repr(q.numerator / q.denominator)

    lines = [f"\\ {problem.name} (decimal rendering of exact rationals: lossy)",
             "Maximize", " obj:"]
    terms = [
        f" {'+' if c >= 0 else '-'} {dec(abs(c))} {problem.var_names[j]}"
        for j, c in sorted(problem.objective.items())
    ]
    lines.append("   " + ("".join(terms) if terms else " 0 zero"))
    lines.append("Subject To")
    for k, (coeffs, rel, rhs) in enumerate(problem.rows):
        body = "".join(
            f" {'+' if c >= 0 else '-'} {dec(abs(c))} {problem.var_names[j]}"
            for j, c in sorted(coeffs.items())
        )
        op = {"<=": "<=", "=": "=", ">=": ">="}[rel]
        lines.append(f" c{k}:{body} {op} {dec(rhs)}")
    lines.append("Bounds")
    for j, name in enumerate(problem.var_names):
        lb, ub = problem.lower[j], problem.upper[j]
        if lb is None:
            lines.append(f" {name} free")
        elif ub is not None:
            lines.append(f" {dec(lb)} <= {name} <= {dec(ub)}")
        elif lb != 0:
            lines.append(f" {name} >= {dec(lb)}")
    lines.append("End")
    return "\n".join(lines) + "\n"
