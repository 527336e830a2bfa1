"""Annotated dependency pairs and their rewrite relations.

An ADP is a rule whose right-hand-side terms carry annotation marks plus a
flag saying whether the ADP may also act as a plain rule below marks.  One
ADP therefore plays both roles of the classical pair (dependency pairs,
rules); processors shrink marks and flip flags instead of deleting rules.

Rewriting with ADPs distinguishes four cases by (redex marked?, flag):
marked positions keep the right-hand side's marks, unmarked ones flatten
it; a false flag additionally erases every mark strictly above the redex.
Full (non-innermost) rewriting threads marks of the matched substitution
through a variable reposition function, since an unrestricted copy would
let duplicating rules multiply marks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterator, Optional

from .ptrs import MultiDistribution, PTRS, ProbRule, infer_signature
from .terms import (
    App,
    Position,
    Signature,
    Substitution,
    Term,
    Var,
    anno,
    anno_root,
    annotated_positions,
    annotated_subterms,
    canonical_form,
    deanno_above,
    defined_positions,
    flat,
    is_flat,
    match,
    positions,
    replace_at,
    subterm_at,
    subterms,
    substitute,
    var_positions,
    variables,
)


class Mode(enum.Enum):
    FULL = "full"
    INNERMOST = "innermost"


class RewriteCase(enum.Enum):
    AT = "at"
    AF = "af"
    NT = "nt"
    NF = "nf"

    @staticmethod
    def classify(marked_redex: bool, flag: bool) -> "RewriteCase":
        if marked_redex:
            return RewriteCase.AT if flag else RewriteCase.AF
        return RewriteCase.NT if flag else RewriteCase.NF


@dataclass(frozen=True)
class ADP:
    lhs: Term
    rhs: MultiDistribution
    flag: bool

    def __post_init__(self):
        if isinstance(self.lhs, Var):
            raise ValueError("left-hand side is a variable")
        lhs_vars = variables(self.lhs)
        for _, r in self.rhs:
            if not variables(r) <= lhs_vars:
                raise ValueError("right-hand side introduces variables")

    def map_rhs(self, f) -> "ADP":
        return ADP(self.lhs, self.rhs.map_terms(f), self.flag)

    def flattened(self) -> "ADP":
        return ADP(self.lhs, self.rhs.map_terms(flat), self.flag)

    def with_flag(self, flag: bool) -> "ADP":
        return ADP(self.lhs, self.rhs, flag)

    def instantiate(self, delta: Substitution) -> "ADP":
        return ADP(
            substitute(self.lhs, delta),
            self.rhs.map_terms(lambda r: substitute(r, delta)),
            self.flag,
        )

    def has_annotations(self) -> bool:
        return any(not is_flat(r) for _, r in self.rhs)

    def canonical_key(self):
        """Alpha-equivalence key; branch order is irrelevant.

        Renaming by first occurrence in the lhs is well defined because
        every rhs variable occurs in the lhs.
        """
        probe = App("*adp*", (self.lhs,) + tuple(t for _, t in self.rhs))
        renamed = canonical_form(probe)
        assert isinstance(renamed, App)
        branches: dict[tuple[Fraction, Term], int] = {}
        for (p, _), t in zip(self.rhs, renamed.args[1:]):
            branches[(p, t)] = branches.get((p, t), 0) + 1
        return (renamed.args[0], frozenset(branches.items()), self.flag)

    def __str__(self):
        return f"{self.lhs} -> {self.rhs}^{'true' if self.flag else 'false'}"


@dataclass(frozen=True)
class ADPProblem:
    adps: tuple[ADP, ...]
    signature: Signature

    @staticmethod
    def of(adps: list[ADP] | tuple[ADP, ...], signature: Optional[Signature] = None) -> "ADPProblem":
        adps = tuple(adps)
        if signature is None:
            rules = [ProbRule(a.lhs, a.rhs.map_terms(flat)) for a in adps]
            signature = infer_signature(rules)
        return ADPProblem(adps, signature)

    def replace(self, index: int, replacements: list[ADP]) -> "ADPProblem":
        adps = self.adps[:index] + tuple(replacements) + self.adps[index + 1:]
        return ADPProblem(dedup_adps(adps), self.signature)

    def has_annotations(self) -> bool:
        return any(a.has_annotations() for a in self.adps)

    def canonical_key(self):
        return frozenset(a.canonical_key() for a in self.adps)

    def __str__(self):
        return "\n".join(str(a) for a in self.adps)


def normalize_variables(a: ADP) -> ADP:
    """Rename variables by first occurrence into a reserved namespace.

    Instantiated ADPs may contain fresh-variable names produced by
    abstraction operators; renaming into names no parser or generator
    produces ("x$0", ...) keeps later fresh names collision-free.
    """
    order: dict[str, str] = {}

    def go(t: Term) -> Term:
        if isinstance(t, Var):
            if t.name not in order:
                order[t.name] = f"x${len(order)}"
            return Var(order[t.name])
        return App(t.sym, tuple(go(x) for x in t.args), t.annotated)

    lhs = go(a.lhs)
    return ADP(lhs, a.rhs.map_terms(go), a.flag)


def dedup_adps(adps: tuple[ADP, ...]) -> tuple[ADP, ...]:
    seen = set()
    out = []
    for a in adps:
        key = a.canonical_key()
        if key not in seen:
            seen.add(key)
            out.append(a)
    return tuple(out)


def canonical_adps(system: PTRS) -> ADPProblem:
    """Annotate every defined symbol in each right-hand side, flag true."""
    defined = system.signature.defined

    def annotate(r: Term) -> Term:
        phi = {
            p for p, u in subterms(r)
            if isinstance(u, App) and u.sym in defined
        }
        return anno(r, phi, defined)

    adps = tuple(
        ADP(rule.lhs, rule.rhs.map_terms(annotate), True) for rule in system.rules
    )
    return ADPProblem(adps, system.signature)


# ---------------------------------------------------------------------------
# projections


def np_rules(problem: ADPProblem) -> list[tuple[Term, Term]]:
    """Plain rules of the flag-true ADPs, one per branch, flattened."""
    out = []
    for a in problem.adps:
        if a.flag:
            out.extend((a.lhs, flat(r)) for _, r in a.rhs)
    return out


def np_prob_rules(problem: ADPProblem) -> list[ProbRule]:
    return [ProbRule(a.lhs, a.rhs.map_terms(flat)) for a in problem.adps if a.flag]


def dp_pairs(problem: ADPProblem) -> list[tuple[Term, Term]]:
    """Marked-root pairs (lhs#, t#) of a trivial-probability problem."""
    out = []
    for a in problem.adps:
        if not a.rhs.is_dirac():
            raise ValueError("dependency pair projection needs trivial probabilities")
        (_, r), = a.rhs
        for _, t in annotated_subterms(r):
            out.append((anno_root(flat(a.lhs)), anno_root(t)))
    return out


# ---------------------------------------------------------------------------
# normal forms w.r.t. an ADP problem (annotation- and flag-blind)


def is_nf_adp(t: Term, problem: ADPProblem) -> bool:
    for _, u in subterms(t):
        if isinstance(u, Var):
            continue
        for a in problem.adps:
            if match(a.lhs, u) is not None:
                return False
    return True


def is_anf_adp(t: Term, problem: ADPProblem) -> bool:
    if isinstance(t, Var):
        return True
    return all(is_nf_adp(a, problem) for a in t.args)


# ---------------------------------------------------------------------------
# variable reposition functions


class VRFPolicy(enum.Enum):
    DROP_ALL = "drop-all"
    KEEP_LEFTMOST = "keep-leftmost"
    ENUMERATE_MAXIMAL = "enumerate-maximal"


VRF = dict[Position, Optional[Position]]  # per right-hand-side branch


def validate_vrf(lhs: Term, r: Term, vrf: VRF) -> None:
    for rho, target in vrf.items():
        if target is None:
            continue
        if subterm_at(lhs, rho) != subterm_at(r, target):
            raise ValueError(f"reposition {rho} -> {target} maps unequal variables")


def vrfs_for_branch(lhs: Term, r: Term, policy: VRFPolicy) -> list[VRF]:
    lhs_vars = var_positions(lhs)
    rhs_by_name: dict[str, list[Position]] = {}
    for p, name in var_positions(r):
        rhs_by_name.setdefault(name, []).append(p)

    if policy is VRFPolicy.DROP_ALL:
        return [{rho: None for rho, _ in lhs_vars}]
    if policy is VRFPolicy.KEEP_LEFTMOST:
        # not injective: several lhs occurrences may route to the same
        # target, which merges their marks there
        return [{
            rho: (rhs_by_name[name][0] if name in rhs_by_name else None)
            for rho, name in lhs_vars
        }]
    if policy is VRFPolicy.ENUMERATE_MAXIMAL:
        choices = [rhs_by_name.get(name, [None]) for _, name in lhs_vars]
        choices = [c if c else [None] for c in choices]
        out = []
        for combo in product(*choices):
            out.append({rho: target for (rho, _), target in zip(lhs_vars, combo)})
        return out
    raise ValueError(f"unknown policy {policy}")


# ---------------------------------------------------------------------------
# rewriting


@dataclass(frozen=True)
class ADPStep:
    adp_index: int
    position: Position
    case: RewriteCase
    successors: MultiDistribution


def _redex_candidates(s: Term, problem: ADPProblem) -> Iterator[tuple[Position, Term]]:
    defined = problem.signature.defined
    for pos, u in subterms(s):
        if isinstance(u, App) and (u.annotated or u.sym in defined):
            yield pos, u


def adp_step_innermost(s: Term, problem: ADPProblem) -> list[ADPStep]:
    """All innermost ADP steps from s, one entry per (ADP, position)."""
    out = []
    for pos, u in _redex_candidates(s, problem):
        redex = flat(u)
        if not is_anf_adp(redex, problem):
            continue
        for i, a in enumerate(problem.adps):
            sigma = match(a.lhs, redex)
            if sigma is None:
                continue
            case = RewriteCase.classify(u.annotated, a.flag)

            def successor(r: Term) -> Term:
                body = r if u.annotated else flat(r)
                t = replace_at(s, pos, substitute(body, sigma))
                if not a.flag:
                    t = deanno_above(t, pos)
                return t

            out.append(ADPStep(i, pos, case, a.rhs.map_terms(successor)))
    return out


def _psi(lhs: Term, redex: Term, vrf: VRF) -> set[Position]:
    """Marked positions of the redex routed into the branch by the vrf."""
    psi: set[Position] = set()
    marked = annotated_positions(redex)
    for rho, target in vrf.items():
        if target is None:
            continue
        for mp in marked:
            if mp[: len(rho)] == rho:
                psi.add(target + mp[len(rho):])
    return psi


def adp_step_full(
    s: Term,
    problem: ADPProblem,
    vrf_policy: VRFPolicy = VRFPolicy.KEEP_LEFTMOST,
) -> list[ADPStep]:
    """All full-rewriting ADP steps, one entry per (ADP, position, VRF)."""
    defined = problem.signature.defined
    out = []
    for pos, u in _redex_candidates(s, problem):
        redex = flat(u)
        for i, a in enumerate(problem.adps):
            sigma = match(a.lhs, redex)
            if sigma is None:
                continue
            case = RewriteCase.classify(u.annotated, a.flag)
            branch_vrfs = [vrfs_for_branch(a.lhs, r, vrf_policy) for _, r in a.rhs]
            for combo in product(*branch_vrfs):

                def successor_entries():
                    for (p, r), vrf in zip(a.rhs, combo):
                        psi = _psi(a.lhs, u, vrf)
                        keep = set(annotated_positions(r)) if u.annotated else set()
                        body = anno(substitute(r, sigma), keep | psi, defined)
                        t = replace_at(s, pos, body)
                        if not a.flag:
                            t = deanno_above(t, pos)
                        yield p, t

                out.append(
                    ADPStep(i, pos, case, MultiDistribution(tuple(successor_entries())))
                )
    return out
