"""Probabilistic rewrite rules with exact rational probabilities.

A probabilistic rule sends a left-hand side to a finite multi-distribution
over right-hand sides.  Multiset semantics matter: equal branches with
separate probabilities stay separate, because later steps may rewrite
them differently.  All probability arithmetic is exact (fractions.Fraction);
no floats enter the prover.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional

from .terms import (
    App,
    Position,
    Signature,
    Term,
    Var,
    flat,
    match,
    rename_apart,
    subterms,
    substitute,
    replace_at,
    unify,
    variables,
)

Rational = Fraction

ONE = Fraction(1)


@dataclass(frozen=True)
class MultiDistribution:
    """Finite multiset of (probability, term) pairs summing to one."""

    entries: tuple[tuple[Fraction, Term], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty distribution")
        total = Fraction(0)
        for p, _ in self.entries:
            if not 0 < p <= 1:
                raise ValueError(f"probability {p} outside (0,1]")
            total += p
        if total != 1:
            raise ValueError(f"probabilities sum to {total}")

    @staticmethod
    def of(*entries: tuple[Fraction | int | str, Term]) -> "MultiDistribution":
        return MultiDistribution(tuple((Fraction(p), t) for p, t in entries))

    @staticmethod
    def dirac(t: Term) -> "MultiDistribution":
        return MultiDistribution(((ONE, t),))

    def support(self) -> list[Term]:
        return [t for _, t in self.entries]

    def map_terms(self, f: Callable[[Term], Term]) -> "MultiDistribution":
        return MultiDistribution(tuple((p, f(t)) for p, t in self.entries))

    def is_dirac(self) -> bool:
        return len(self.entries) == 1

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __str__(self):
        return "{%s}" % ", ".join(f"{p}: {t}" for p, t in self.entries)


@dataclass(frozen=True)
class ProbRule:
    lhs: Term
    rhs: MultiDistribution

    def __post_init__(self):
        if isinstance(self.lhs, Var):
            raise ValueError("left-hand side is a variable")
        lhs_vars = variables(self.lhs)
        for _, r in self.rhs:
            extra = variables(r) - lhs_vars
            if extra:
                raise ValueError(
                    f"right-hand side variables {sorted(extra)} missing from left-hand side"
                )

    def __str__(self):
        return f"{self.lhs} -> {self.rhs}"


@dataclass(frozen=True)
class PTRS:
    signature: Signature
    rules: tuple[ProbRule, ...]

    @staticmethod
    def of(rules: list[ProbRule]) -> "PTRS":
        return PTRS(infer_signature(rules), tuple(rules))

    def __str__(self):
        return "\n".join(str(r) for r in self.rules)


def infer_signature(rules: list[ProbRule]) -> Signature:
    arities: dict[str, int] = {}
    defined: set[str] = set()

    def scan(t: Term):
        if isinstance(t, App):
            prev = arities.setdefault(t.sym, len(t.args))
            if prev != len(t.args):
                raise ValueError(f"symbol {t.sym} used with arities {prev} and {len(t.args)}")
            for a in t.args:
                scan(a)

    for rule in rules:
        scan(rule.lhs)
        assert isinstance(rule.lhs, App)
        defined.add(rule.lhs.sym)
        for _, r in rule.rhs:
            scan(r)
    if not any(n == 0 for n in arities.values()):
        arities["_unit"] = 0  # keeps ground terms available
    return Signature(arities, frozenset(defined))


# ---------------------------------------------------------------------------
# syntactic rule properties


@dataclass(frozen=True)
class RuleProperties:
    non_duplicating: bool
    left_linear: bool
    right_linear: bool
    linear: bool
    non_erasing: bool
    non_overlapping: bool


@dataclass(frozen=True)
class SystemProperties:
    per_rule: tuple[RuleProperties, ...]
    non_duplicating: bool
    left_linear: bool
    right_linear: bool
    linear: bool
    non_erasing: bool
    non_overlapping: bool


def _occurrences(t: Term) -> dict[str, int]:
    out: dict[str, int] = {}
    for _, u in subterms(t):
        if isinstance(u, Var):
            out[u.name] = out.get(u.name, 0) + 1
    return out


def rules_overlap(l1: Term, l2: Term, same_rule: bool) -> bool:
    """Whether two (variable-disjoint copies of) left-hand sides overlap."""
    taken = set(variables(l1)) | set(variables(l2))
    l2r, _ = rename_apart(l2, taken, hint="'")
    for pos, u in subterms(l1):
        if isinstance(u, Var):
            continue
        if same_rule and pos == ():
            continue
        if unify(u, l2r) is not None:
            return True
    return False


def analyze_properties(system: PTRS | list[tuple[Term, MultiDistribution]]) -> SystemProperties:
    """Exact per-rule and global syntactic flags.

    Overlap treats annotations and flags as absent and checks all pairs of
    left-hand sides over renamed variables, skipping the root for a rule
    against itself.
    """
    if isinstance(system, PTRS):
        pairs = [(r.lhs, r.rhs) for r in system.rules]
    else:
        pairs = [(lhs, rhs) for lhs, rhs in system]
    pairs = [(flat(lhs), rhs.map_terms(flat)) for lhs, rhs in pairs]

    per_rule = []
    for i, (lhs, rhs) in enumerate(pairs):
        locc = _occurrences(lhs)
        roccs = [_occurrences(r) for _, r in rhs]
        non_dup = all(
            occ.get(x, 0) <= locc.get(x, 0)
            for occ in roccs
            for x in occ
        )
        ll = all(n <= 1 for n in locc.values())
        rl = all(n <= 1 for occ in roccs for n in occ.values())
        ne = all(all(x in occ for x in locc) for occ in roccs)
        no = not any(
            rules_overlap(lhs, other_lhs, same_rule=(i == j))
            for j, (other_lhs, _) in enumerate(pairs)
        )
        per_rule.append(RuleProperties(non_dup, ll, rl, ll and rl, ne, no))

    return SystemProperties(
        per_rule=tuple(per_rule),
        non_duplicating=all(r.non_duplicating for r in per_rule),
        left_linear=all(r.left_linear for r in per_rule),
        right_linear=all(r.right_linear for r in per_rule),
        linear=all(r.linear for r in per_rule),
        non_erasing=all(r.non_erasing for r in per_rule),
        non_overlapping=all(r.non_overlapping for r in per_rule),
    )


# ---------------------------------------------------------------------------
# normal forms and single steps


def is_nf(t: Term, rules_or_system: PTRS | list[ProbRule]) -> bool:
    """No rule left-hand side matches any subterm (annotation-blind)."""
    rules = rules_or_system.rules if isinstance(rules_or_system, PTRS) else rules_or_system
    for _, u in subterms(t):
        if isinstance(u, Var):
            continue
        for rule in rules:
            if match(rule.lhs, u) is not None:
                return False
    return True


def is_anf(t: Term, rules_or_system: PTRS | list[ProbRule]) -> bool:
    """Every proper subterm is a normal form."""
    if isinstance(t, Var):
        return True
    rules = rules_or_system.rules if isinstance(rules_or_system, PTRS) else rules_or_system
    return all(is_nf(a, rules) for a in t.args)


class RedexPolicy(enum.Enum):
    INNERMOST_LEFTMOST = "innermost-leftmost"
    LEFTMOST_OUTERMOST = "leftmost-outermost"
    RANDOM = "random"
    EXHAUSTIVE = "exhaustive-enumeration"


@dataclass(frozen=True)
class Step:
    rule_index: int
    position: Position
    successors: MultiDistribution


def enumerate_steps(t: Term, system: PTRS, innermost_only: bool = False) -> list[Step]:
    out = []
    for pos, u in subterms(t):
        if isinstance(u, Var):
            continue
        for i, rule in enumerate(system.rules):
            sigma = match(rule.lhs, u)
            if sigma is None:
                continue
            if innermost_only and not is_anf(substitute(rule.lhs, sigma), system):
                continue
            succ = rule.rhs.map_terms(lambda r: replace_at(t, pos, substitute(r, sigma)))
            out.append(Step(i, pos, succ))
    return out


def ptrs_step(
    t: Term,
    system: PTRS,
    policy: RedexPolicy,
    rng: Optional[random.Random] = None,
) -> Optional[Step] | list[Step]:
    """One step under the policy, or None when t is a normal form.

    EXHAUSTIVE returns the full list of enabled steps instead.
    """
    if policy is RedexPolicy.EXHAUSTIVE:
        return enumerate_steps(t, system)
    if policy is RedexPolicy.INNERMOST_LEFTMOST:
        steps = enumerate_steps(t, system, innermost_only=True)
        return min(steps, key=lambda s: (s.position, s.rule_index)) if steps else None
    if policy is RedexPolicy.LEFTMOST_OUTERMOST:
        steps = enumerate_steps(t, system)
        return min(steps, key=lambda s: (s.position, s.rule_index)) if steps else None
    if policy is RedexPolicy.RANDOM:
        if rng is None:
            raise ValueError("random policy needs an rng")
        steps = enumerate_steps(t, system)
        return rng.choice(steps) if steps else None
    raise ValueError(f"unknown policy {policy}")
