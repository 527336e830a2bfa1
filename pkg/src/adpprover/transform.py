"""Transformational processors: rewriting, instantiation, forward
instantiation, and rule overlap instantiation.

All four replace one ADP by refined variants.  Rewriting evaluates a
mark-free defined subterm of one branch in place, which is only sound
under innermost evaluation and behind one of three gates (checked here
exactly); the instantiation family specializes an ADP by unifiers derived
from its possible predecessors, successors, or from the rules overlapping
a marked subterm.  Rule overlap instantiation must never rewrite: it only
instantiates, and it keeps a residual ADP carrying the marks whose
narrowings are not covered by the computed substitutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .adp import ADP, ADPProblem, Mode, is_anf_adp, normalize_variables
from .graph import estimation_skeleton
from .ptrs import MultiDistribution, rules_overlap
from .results import Refusal
from .terms import (
    App,
    Position,
    Substitution,
    Term,
    Var,
    anno,
    anno_root,
    annotated_subterms,
    canonical_form,
    cap_inverse,
    flat,
    is_flat,
    is_renaming,
    match,
    more_general,
    ren,
    rename_apart,
    replace_at,
    substitute,
    subterm_at,
    subterms,
    unify,
    variables,
)


def _restrict(sigma: Substitution, names: set[str]) -> Substitution:
    return {x: t for x, t in sigma.items() if x in names}


def _usable_adps_of_subterm(problem: ADPProblem, t: Term) -> list[int]:
    """Flag-true ADPs reachable when evaluating t below a mark."""
    by_root: dict[str, list[int]] = {}
    for i, a in enumerate(problem.adps):
        if a.flag:
            assert isinstance(a.lhs, App)
            by_root.setdefault(a.lhs.sym, []).append(i)

    def usable(u: Term, active: frozenset[int]) -> set[int]:
        if isinstance(u, Var):
            return set()
        hits = [] if u.annotated else [i for i in by_root.get(u.sym, []) if i in active]
        rest = active - set(hits)
        out = set(hits)
        for arg in u.args:
            out |= usable(arg, rest)
        for i in hits:
            for _, r in problem.adps[i].rhs:
                out |= usable(flat(r), rest)
        return out

    return sorted(usable(t, frozenset(range(len(problem.adps)))))


def _adp_is_linear(a: ADP) -> bool:
    def linear(t: Term) -> bool:
        seen: dict[str, int] = {}
        for _, u in subterms(t):
            if isinstance(u, Var):
                seen[u.name] = seen.get(u.name, 0) + 1
        return all(n <= 1 for n in seen.values())

    return linear(a.lhs) and all(linear(r) for _, r in a.rhs)


def _adp_is_non_erasing(a: ADP) -> bool:
    lhs_vars = variables(a.lhs)
    return all(lhs_vars <= variables(r) for _, r in a.rhs)


def _set_is_non_overlapping(problem: ADPProblem, indices: list[int]) -> bool:
    for i in indices:
        for j in indices:
            same = i == j
            if rules_overlap(flat(problem.adps[i].lhs), flat(problem.adps[j].lhs), same):
                return False
    return True


# ---------------------------------------------------------------------------
# rewriting processor


def proc_rewriting(
    problem: ADPProblem,
    adp_index: int,
    branch_index: int,
    tau: Position,
    mode: Mode,
) -> tuple[ADPProblem, dict] | Refusal:
    """Evaluate the mark-free subterm at tau of one branch in place."""
    if mode is Mode.FULL:
        return Refusal.of("rewriting", "unsound for full rewriting")
    a = problem.adps[adp_index]
    prob, r = a.rhs.entries[branch_index]
    target = subterm_at(r, tau)
    if isinstance(target, Var) or target.annotated or target.sym not in problem.signature.defined:
        return Refusal.of("rewriting", "target is not an unmarked defined position", position=tau)
    if not is_flat(target):
        return Refusal.of("rewriting", "marks below the target position", position=tau)

    used = None
    for i, b in enumerate(problem.adps):
        if not b.flag:
            continue
        sigma = match(b.lhs, target)
        if sigma is not None:
            used = (i, b, sigma)
            break
    if used is None:
        return Refusal.of("rewriting", "no flag-true rule rewrites the target", target=str(target))
    used_index, used_adp, sigma = used

    usable = _usable_adps_of_subterm(problem, target)
    if not _set_is_non_overlapping(problem, usable):
        return Refusal.of(
            "rewriting", "usable rules of the target overlap", usable=usable
        )
    # cheapest gate first: trivial probabilities, then linearity, then ground
    gate = None
    if all(problem.adps[i].rhs.is_dirac() and problem.adps[i].flag for i in usable):
        gate = 2
    if gate is None and _adp_is_linear(used_adp) and _adp_is_non_erasing(used_adp):
        gate = 1
    if gate is None and not variables(target) and is_anf_adp(target, problem):
        gate = 3
    if gate is None:
        return Refusal.of(
            "rewriting",
            "no soundness gate holds",
            linear=_adp_is_linear(used_adp),
            non_erasing=_adp_is_non_erasing(used_adp),
            usable=usable,
        )

    new_entries = []
    for k, (p, rr) in enumerate(a.rhs.entries):
        if k != branch_index:
            new_entries.append((p, rr))
            continue
        for q, rhs_term in used_adp.rhs:
            # an unmarked redex with a flag-true rule: flatten the used
            # right-hand side, keep everything else as is
            new_entries.append((p * q, replace_at(r, tau, substitute(flat(rhs_term), sigma))))
    new_adp = ADP(a.lhs, MultiDistribution(tuple(new_entries)), a.flag)
    out = problem.replace(adp_index, [a.flattened(), new_adp])
    info = {
        "adp": adp_index,
        "branch": branch_index,
        "position": list(tau),
        "rule": used_index,
        "gate": gate,
    }
    return out, info


# ---------------------------------------------------------------------------
# narrowing substitutions and coverage


@dataclass(frozen=True)
class NarrowingInfo:
    target: Term
    substitutions: tuple[tuple[Substitution, int, Position], ...]


def compute_narrowing_substitutions(
    t: Term, problem: ADPProblem, mode: Mode, host_lhs: Term
) -> NarrowingInfo:
    """All mgus of non-variable subterms of t with renamed ADP lhs sides.

    Substitutions are restricted to the host ADP's variables; innermost
    mode keeps only those leaving both instantiated lhs sides in argument
    normal form.
    """
    host_vars = variables(host_lhs) | variables(t)
    found = []
    for tau, u in subterms(t):
        if isinstance(u, Var):
            continue
        for i, b in enumerate(problem.adps):
            renamed_lhs, _ = rename_apart(b.lhs, set(host_vars), hint="_n")
            delta = unify(u, renamed_lhs)
            if delta is None:
                continue
            if mode is Mode.INNERMOST:
                if not is_anf_adp(substitute(host_lhs, delta), problem):
                    continue
                if not is_anf_adp(substitute(renamed_lhs, delta), problem):
                    continue
            found.append((_restrict(delta, host_vars), i, tau))
    return NarrowingInfo(t, tuple(found))


def is_covered(
    t_prime: Term,
    deltas: list[Substitution],
    problem: ADPProblem,
    mode: Mode,
    host_lhs: Term,
) -> bool:
    """Every narrowing substitution of t_prime is an instance of a delta."""
    names = variables(host_lhs) | variables(t_prime)
    info = compute_narrowing_substitutions(t_prime, problem, mode, host_lhs)
    for rho, _, _ in info.substitutions:
        if not any(more_general(d, rho, names) for d in deltas):
            return False
    return True


# ---------------------------------------------------------------------------
# instantiation


def _dedup_substitutions(deltas: list[Substitution], host_vars: set[str]) -> list[Substitution]:
    seen = set()
    out = []
    for d in deltas:
        probe = App("*subst*", tuple(substitute(Var(x), d) for x in sorted(host_vars)))
        key = canonical_form(probe)
        if key not in seen:
            seen.add(key)
            out.append(d)
    return out


def proc_instantiation(
    problem: ADPProblem, adp_index: int, mode: Mode
) -> tuple[ADPProblem, dict]:
    """Specialize an ADP by the unifiers its predecessors force."""
    a = problem.adps[adp_index]
    host_vars = variables(a.lhs)
    lhs_sharp = anno_root(a.lhs)
    deltas = []
    for b in problem.adps:
        for _, r in b.rhs:
            for _, t in annotated_subterms(r):
                taken = set(variables(b.lhs)) | set(host_vars)
                b_lhs_renamed, renaming = rename_apart(b.lhs, set(taken), hint="_p")
                t_renamed = substitute(t, renaming)
                skeleton = estimation_skeleton(anno_root(t_renamed), problem, mode)
                delta = unify(skeleton, lhs_sharp)
                if delta is None:
                    continue
                if mode is Mode.INNERMOST:
                    if not is_anf_adp(substitute(b_lhs_renamed, delta), problem):
                        continue
                    if not is_anf_adp(substitute(a.lhs, delta), problem):
                        continue
                deltas.append(_restrict(delta, host_vars))
    deltas = _dedup_substitutions(deltas, host_vars)
    instantiated = [normalize_variables(a.instantiate(d)) for d in deltas]
    out = problem.replace(adp_index, instantiated + [a.flattened()])
    info = {
        "adp": adp_index,
        "instances": [str(x.lhs) for x in instantiated],
        "useful": any(not is_renaming(d) for d in deltas),
    }
    return out, info


def proc_forward_instantiation(
    problem: ADPProblem, adp_index: int, mode: Mode
) -> tuple[ADPProblem, dict]:
    """Specialize an ADP by the unifiers its successors force."""
    a = problem.adps[adp_index]
    host_vars = variables(a.lhs)
    deltas = []
    for _, r in a.rhs:
        for _, t in annotated_subterms(r):
            t_sharp = anno_root(t)
            if mode is Mode.INNERMOST:
                relevant = usable_of_term(problem, t_sharp)
            else:
                relevant = list(range(len(problem.adps)))
            collapsing = any(
                isinstance(rr, Var)
                for i in relevant
                for _, rr in problem.adps[i].rhs
            )
            rhs_roots = frozenset(
                rr.sym
                for i in relevant
                for _, rr in problem.adps[i].rhs
                if isinstance(rr, App)
            )
            for b in problem.adps:
                taken = set(host_vars) | set(variables(t_sharp))
                b_lhs_renamed, _ = rename_apart(b.lhs, set(taken), hint="_s")
                reversed_skeleton = ren(
                    cap_inverse(anno_root(b_lhs_renamed), rhs_roots, collapsing)
                )
                delta = unify(t_sharp, reversed_skeleton)
                if delta is None:
                    continue
                if mode is Mode.INNERMOST:
                    if not is_anf_adp(substitute(a.lhs, delta), problem):
                        continue
                    if not is_anf_adp(substitute(b_lhs_renamed, delta), problem):
                        continue
                deltas.append(_restrict(delta, host_vars))
    deltas = _dedup_substitutions(deltas, host_vars)
    instantiated = [normalize_variables(a.instantiate(d)) for d in deltas]
    out = problem.replace(adp_index, instantiated + [a.flattened()])
    info = {
        "adp": adp_index,
        "instances": [str(x.lhs) for x in instantiated],
        "useful": any(not is_renaming(d) for d in deltas),
    }
    return out, info


def usable_of_term(problem: ADPProblem, t_sharp: Term) -> list[int]:
    return _usable_adps_of_subterm(problem, t_sharp)


# ---------------------------------------------------------------------------
# rule overlap instantiation


def proc_rule_overlap_instantiation(
    problem: ADPProblem,
    adp_index: int,
    branch_index: int,
    target_position: Position,
    mode: Mode,
) -> tuple[ADPProblem, dict] | Refusal:
    """Instantiate by all narrowing substitutions of one marked subterm,
    keeping a residual ADP with exactly the uncovered marks."""
    if mode is Mode.FULL:
        return Refusal.of("rule_overlap_instantiation", "unsound for full rewriting")
    a = problem.adps[adp_index]
    _, r = a.rhs.entries[branch_index]
    marked = subterm_at(r, target_position)
    if not (isinstance(marked, App) and marked.annotated):
        return Refusal.of(
            "rule_overlap_instantiation",
            "target position is not marked",
            position=target_position,
        )
    t = flat(marked)
    host_vars = variables(a.lhs)
    info = compute_narrowing_substitutions(t, problem, mode, a.lhs)
    deltas = _dedup_substitutions([d for d, _, _ in info.substitutions], host_vars)

    defined = problem.signature.defined
    residual_entries = []
    for p, ri in a.rhs:
        keep = set()
        for pi, t_prime in annotated_subterms(ri):
            if not is_covered(t_prime, deltas, problem, mode, a.lhs):
                keep.add(pi)
        residual_entries.append((p, anno(ri, keep, defined)))
    from .ptrs import MultiDistribution

    residual = ADP(a.lhs, MultiDistribution(tuple(residual_entries)), a.flag)
    instantiated = [normalize_variables(a.instantiate(d)) for d in deltas]
    out = problem.replace(adp_index, instantiated + [residual])
    just = {
        "adp": adp_index,
        "branch": branch_index,
        "position": list(target_position),
        "substitution_count": len(deltas),
        "instances": [str(x.lhs) for x in instantiated],
    }
    return out, just
