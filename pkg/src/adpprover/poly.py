"""Symbolic multilinear polynomial interpretations and coefficient search.

Every function symbol (marked or plain) gets an affine template
c0 + c1*x1 + ... + cn*xn with unknown natural coefficients; an opt-in
bilinear extension adds cij*xi*xj monomials.  Evaluating a term yields a
polynomial in the rule variables whose coefficients are integer
polynomials in the unknowns.  Inequalities between such polynomials are
reduced to coefficient-wise constraints (absolute positiveness): after
clearing denominators, "P >= Q over all naturals" is implied by every
rule-variable monomial of P-Q having a nonnegative coefficient, and
"P > Q" further needs the constant coefficient to be at least one.

The internal solver is a backtracking search over unknown values in
{0..bound} with interval pruning; it is deterministic and needs no
external tools.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Optional

from .terms import App, Term, Var

# monomial in rule variables: sorted ((name, exponent) ...), () = constant
Monom = tuple[tuple[str, int], ...]
# monomial in unknowns: sorted names with repetition, () = constant
UMonom = tuple[str, ...]
UPoly = dict[UMonom, Fraction]
SymbolicPoly = dict[Monom, UPoly]

CONST: Monom = ()


def upoly_const(c: Fraction | int) -> UPoly:
    c = Fraction(c)
    return {(): c} if c else {}


def upoly_unknown(name: str) -> UPoly:
    return {(name,): Fraction(1)}


def upoly_add(a: UPoly, b: UPoly) -> UPoly:
    out = dict(a)
    for m, c in b.items():
        v = out.get(m, Fraction(0)) + c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def upoly_scale(a: UPoly, c: Fraction | int) -> UPoly:
    c = Fraction(c)
    if not c:
        return {}
    return {m: v * c for m, v in a.items()}


def upoly_mul(a: UPoly, b: UPoly) -> UPoly:
    out: UPoly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = tuple(sorted(m1 + m2))
            v = out.get(m, Fraction(0)) + c1 * c2
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def poly_add(a: SymbolicPoly, b: SymbolicPoly) -> SymbolicPoly:
    out = {m: dict(c) for m, c in a.items()}
    for m, c in b.items():
        merged = upoly_add(out.get(m, {}), c)
        if merged:
            out[m] = merged
        else:
            out.pop(m, None)
    return out


def poly_scale(a: SymbolicPoly, c: Fraction | int) -> SymbolicPoly:
    c = Fraction(c)
    if not c:
        return {}
    return {m: upoly_scale(u, c) for m, u in a.items()}


def poly_mul(a: SymbolicPoly, b: SymbolicPoly) -> SymbolicPoly:
    out: SymbolicPoly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            exps: dict[str, int] = {}
            for name, e in m1 + m2:
                exps[name] = exps.get(name, 0) + e
            m = tuple(sorted(exps.items()))
            merged = upoly_add(out.get(m, {}), upoly_mul(c1, c2))
            if merged:
                out[m] = merged
            else:
                out.pop(m, None)
    return out


def poly_sub(a: SymbolicPoly, b: SymbolicPoly) -> SymbolicPoly:
    return poly_add(a, poly_scale(b, -1))


def poly_of_var(name: str) -> SymbolicPoly:
    return {((name, 1),): {(): Fraction(1)}}


def poly_of_upoly(u: UPoly) -> SymbolicPoly:
    return {CONST: dict(u)} if u else {}


# ---------------------------------------------------------------------------
# interpretation templates

SymbolKey = tuple[str, bool]  # (symbol name, marked?)


def unknown_name(key: SymbolKey, part: str) -> str:
    sym, marked = key
    return f"{sym}{'#' if marked else ''}.{part}"


@dataclass
class SymbolicInterpretation:
    """Unknown-coefficient templates, instantiated lazily per symbol."""

    arities: dict[SymbolKey, int] = field(default_factory=dict)
    bilinear: bool = False

    def register(self, key: SymbolKey, arity: int):
        prev = self.arities.setdefault(key, arity)
        if prev != arity:
            raise ValueError(f"symbol {key} with arities {prev} and {arity}")

    def unknowns(self) -> list[str]:
        out = []
        for key in sorted(self.arities):
            n = self.arities[key]
            out.append(unknown_name(key, "c0"))
            out.extend(unknown_name(key, f"c{i}") for i in range(1, n + 1))
            if self.bilinear:
                out.extend(
                    unknown_name(key, f"c{i}_{j}")
                    for i in range(1, n + 1)
                    for j in range(i + 1, n + 1)
                )
        return out

    def apply(self, key: SymbolKey, args: list[SymbolicPoly]) -> SymbolicPoly:
        self.register(key, len(args))
        out: SymbolicPoly = {CONST: upoly_unknown(unknown_name(key, "c0"))}
        for i, arg in enumerate(args, 1):
            coeff = poly_of_upoly(upoly_unknown(unknown_name(key, f"c{i}")))
            out = poly_add(out, poly_mul(coeff, arg))
        if self.bilinear:
            for i in range(1, len(args) + 1):
                for j in range(i + 1, len(args) + 1):
                    coeff = poly_of_upoly(upoly_unknown(unknown_name(key, f"c{i}_{j}")))
                    out = poly_add(out, poly_mul(coeff, poly_mul(args[i - 1], args[j - 1])))
        return out

    def evaluate(self, t: Term) -> SymbolicPoly:
        if isinstance(t, Var):
            return poly_of_var(t.name)
        args = [self.evaluate(a) for a in t.args]
        return self.apply((t.sym, t.annotated), args)


# ---------------------------------------------------------------------------
# concrete interpretations (solver models)


@dataclass(frozen=True)
class PolyInterpretation:
    """Multilinear polynomials with natural coefficients per symbol."""

    coeffs: tuple[tuple[str, int], ...]  # unknown name -> value, sorted

    def as_dict(self) -> dict[str, int]:
        return dict(self.coeffs)

    def value(self, name: str) -> int:
        return self.as_dict().get(name, 0)

    def eval_term(self, t: Term, env: dict[str, int]) -> int:
        if isinstance(t, Var):
            return env[t.name]
        vals = [self.eval_term(a, env) for a in t.args]
        key = (t.sym, t.annotated)
        total = self.value(unknown_name(key, "c0"))
        for i, v in enumerate(vals, 1):
            total += self.value(unknown_name(key, f"c{i}")) * v
        for i in range(1, len(vals) + 1):
            for j in range(i + 1, len(vals) + 1):
                total += self.value(unknown_name(key, f"c{i}_{j}")) * vals[i - 1] * vals[j - 1]
        return total

    def render(self) -> dict[str, str]:
        """Human-readable polynomial per symbol, zero symbols omitted."""
        by_key: dict[SymbolKey, dict[str, int]] = {}
        for name, v in self.coeffs:
            if not v:
                continue
            head, part = name.rsplit(".", 1)
            marked = head.endswith("#")
            key = (head.rstrip("#"), marked)
            by_key.setdefault(key, {})[part] = v
        out = {}
        for (sym, marked), parts in sorted(by_key.items()):
            terms = []
            c0 = parts.get("c0", 0)
            if c0:
                terms.append(str(c0))
            for part, v in sorted(parts.items()):
                if part == "c0":
                    continue
                if "_" in part:
                    i, j = part[1:].split("_")
                    mono = f"x{i}*x{j}"
                else:
                    mono = f"x{part[1:]}"
                terms.append(mono if v == 1 else f"{v}*{mono}")
            out[sym + ("#" if marked else "")] = " + ".join(terms) if terms else "0"
        return out


# ---------------------------------------------------------------------------
# reduction to coefficient constraints


@dataclass(frozen=True)
class ArithConstraint:
    """upoly(unknowns) >= bound, unknowns ranging over naturals."""

    upoly: tuple[tuple[UMonom, int], ...]
    bound: int
    origin: str


def reduce_inequality(
    lhs: SymbolicPoly, rhs: SymbolicPoly, strict: bool, origin: str
) -> list[ArithConstraint]:
    """Sound coefficient-wise reduction of lhs >= rhs (or >) over naturals."""
    diff = poly_sub(lhs, rhs)
    denoms = [c.denominator for u in diff.values() for c in u.values()]
    scale = lcm(*denoms) if denoms else 1
    out = []
    monoms = sorted(diff.keys())
    if strict and CONST not in monoms:
        monoms.insert(0, CONST)
    for m in monoms:
        upoly = {um: c * scale for um, c in diff.get(m, {}).items()}
        assert all(c.denominator == 1 for c in upoly.values())
        entries = tuple(sorted((um, int(c)) for um, c in upoly.items() if c))
        bound = 1 if (strict and m == CONST) else 0
        if not entries and bound <= 0:
            continue  # trivially true
        label = origin if m == CONST else f"{origin}[{'*'.join(f'{n}^{e}' for n, e in m)}]"
        out.append(ArithConstraint(entries, bound, label))
    return out


# ---------------------------------------------------------------------------
# internal solver: backtracking with interval pruning


class SearchBudget:
    def __init__(self, max_assignments: int = 400_000, deadline=None):
        self.remaining = max_assignments
        self.deadline = deadline

    def tick(self) -> bool:
        self.remaining -= 1
        if self.remaining <= 0:
            return False
        if self.deadline is not None and self.remaining % 1024 == 0 and self.deadline():
            return False
        return True


def _monom_range(um: UMonom, coeff: int, values: dict[str, int], bound: int) -> tuple[int, int]:
    """Min and max of coeff * prod(um) given the partial assignment."""
    known = 1
    unknown = 0
    for name in um:
        if name in values:
            known *= values[name]
        else:
            unknown += 1
    if unknown == 0:
        v = coeff * known
        return v, v
    hi = coeff * known * (bound ** unknown)
    if coeff >= 0:
        return (0, hi) if known >= 0 else (hi, 0)
    return (hi, 0) if known >= 0 else (0, hi)


def solve_constraints(
    constraints: list[ArithConstraint],
    bound: int,
    budget: SearchBudget,
) -> Optional[dict[str, int]]:
    """First assignment (smallest values, sorted unknown order) or None."""
    names: set[str] = set()
    for c in constraints:
        for um, _ in c.upoly:
            names.update(um)
    order = sorted(names)
    # most-constrained first: unknowns in more constraints come earlier
    freq = {n: 0 for n in order}
    for c in constraints:
        seen = {n for um, _ in c.upoly for n in um}
        for n in seen:
            freq[n] += 1
    order.sort(key=lambda n: (-freq[n], n))

    by_unknown: dict[str, list[ArithConstraint]] = {n: [] for n in order}
    for c in constraints:
        for n in {n for um, _ in c.upoly for n in um}:
            by_unknown[n].append(c)

    values: dict[str, int] = {}

    def feasible(c: ArithConstraint) -> bool:
        lo = hi = 0
        for um, coeff in c.upoly:
            mlo, mhi = _monom_range(um, coeff, values, bound)
            lo += mlo
            hi += mhi
        return hi >= c.bound

    def backtrack(i: int) -> bool:
        if i == len(order):
            return all(feasible(c) for c in constraints)
        name = order[i]
        for v in range(bound + 1):
            if not budget.tick():
                return False
            values[name] = v
            if all(feasible(c) for c in by_unknown[name]):
                if backtrack(i + 1):
                    return True
            del values[name]
        return False

    for c in constraints:
        if not feasible(c):
            return None
    if backtrack(0):
        return dict(values)
    return None
