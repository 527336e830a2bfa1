"""Minimal non-probabilistic dependency pair backend.

Used after probability removal: a trivial-probability ADP problem is
(i)AST exactly when its plain DP problem is (innermost) terminating.  The
strategy is fixed: dependency graph, then (innermost only) usable rules,
then a reduction pair over the same affine interpretations, looping until
every sub-problem runs out of pairs.  Failure means "don't know".
"""

from __future__ import annotations

import itertools
from typing import Optional

from .adp import Mode
from .poly import SearchBudget, SymbolicInterpretation, solve_constraints
from .terms import (
    App,
    Term,
    Var,
    match,
    rename_apart,
    substitute,
    subterms,
    unify,
    variables,
)

Rule = tuple[Term, Term]


def _is_nf(t: Term, rules: list[Rule]) -> bool:
    for _, u in subterms(t):
        if isinstance(u, Var):
            continue
        if any(match(lhs, u) is not None for lhs, _ in rules):
            return False
    return True


def _is_anf(t: Term, rules: list[Rule]) -> bool:
    if isinstance(t, Var):
        return True
    return all(_is_nf(a, rules) for a in t.args)


def _gated_cap(t: Term, rules: list[Rule], rename_vars: bool) -> Term:
    from .terms import FreshVars

    fresh = FreshVars()

    def go(u: Term) -> Term:
        if isinstance(u, Var):
            return fresh.next() if rename_vars else u
        capped = App(u.sym, tuple(go(a) for a in u.args), u.annotated)
        if capped.annotated:
            return capped
        for lhs, _ in rules:
            renamed, _ = rename_apart(lhs, set(variables(capped)), hint="_g")
            if unify(capped, renamed) is not None:
                return fresh.next()
        return capped

    return go(t)


def _graph_sccs(dps: list[Rule], rules: list[Rule], mode: Mode) -> list[list[int]]:
    from .graph import DepGraph, sccs

    edges = []
    for lhs1, rhs1 in dps:
        skeleton = _gated_cap(rhs1, rules, rename_vars=(mode is Mode.FULL))
        succ = set()
        for j, (lhs2, _) in enumerate(dps):
            taken = set(variables(skeleton)) | set(variables(lhs1))
            renamed, _ = rename_apart(lhs2, taken, hint="_t")
            delta = unify(skeleton, renamed)
            if delta is None:
                continue
            if mode is Mode.INNERMOST:
                if not _is_anf(substitute(lhs1, delta), rules):
                    continue
                if not _is_anf(substitute(renamed, delta), rules):
                    continue
            succ.add(j)
        edges.append(frozenset(succ))
    return sccs(DepGraph(len(dps), tuple(edges), mode))


def _usable_rules(dps: list[Rule], rules: list[Rule]) -> list[Rule]:
    by_root: dict[str, list[int]] = {}
    for i, (lhs, _) in enumerate(rules):
        assert isinstance(lhs, App)
        by_root.setdefault(lhs.sym, []).append(i)

    def usable(t: Term, active: frozenset[int]) -> set[int]:
        if isinstance(t, Var):
            return set()
        hits = [] if t.annotated else [i for i in by_root.get(t.sym, []) if i in active]
        rest = active - set(hits)
        out = set(hits)
        for arg in t.args:
            out |= usable(arg, rest)
        for i in hits:
            out |= usable(rules[i][1], rest)
        return out

    all_active = frozenset(range(len(rules)))
    found: set[int] = set()
    for _, rhs in dps:
        found |= usable(rhs, all_active)
    return [rules[i] for i in sorted(found)]


def _reduction_pair(
    dps: list[Rule], rules: list[Rule], bound: int, search: SearchBudget
) -> Optional[tuple[list[int], dict[str, str]]]:
    from .orders import SemanticConstraint, reduce_to_coefficient_constraints
    from .poly import PolyInterpretation

    interp = SymbolicInterpretation()
    base = []
    for k, (lhs, rhs) in enumerate(dps):
        base.append(
            SemanticConstraint(
                interp.evaluate(lhs), interp.evaluate(rhs), False, f"dp{k}.weak"
            )
        )
    for k, (lhs, rhs) in enumerate(rules):
        base.append(
            SemanticConstraint(
                interp.evaluate(lhs), interp.evaluate(rhs), False, f"rule{k}.weak"
            )
        )
    stricts = [
        SemanticConstraint(
            interp.evaluate(lhs), interp.evaluate(rhs), True, f"dp{k}.strict"
        )
        for k, (lhs, rhs) in enumerate(dps)
    ]
    base_reduced = reduce_to_coefficient_constraints(base)
    candidates = list(range(len(dps)))
    subsets: list[tuple[int, ...]] = [(c,) for c in candidates]
    if len(candidates) <= 5:
        for size in range(2, len(candidates) + 1):
            subsets.extend(itertools.combinations(candidates, size))
    else:
        subsets.append(tuple(candidates))
    for subset in subsets:
        constraints = list(base_reduced)
        for k in subset:
            constraints.extend(stricts[k].reduced())
        model = solve_constraints(constraints, bound, search)
        if model is not None:
            names = set(interp.unknowns())
            values = {n: model.get(n, 0) for n in names}
            rendered = PolyInterpretation(tuple(sorted(values.items()))).render()
            return list(subset), rendered
        if search.remaining <= 0:
            return None
    return None


def prove_dp_problem(
    dps: list[Rule], rules: list[Rule], mode: Mode, budget
) -> tuple[bool, list[dict]]:
    log: list[dict] = []
    search = SearchBudget(budget.max_assignments, budget.deadline)
    todo: list[tuple[list[Rule], list[Rule]]] = [(list(dps), list(rules))]
    while todo:
        cur_dps, cur_rules = todo.pop()
        if not cur_dps:
            continue
        components = _graph_sccs(cur_dps, cur_rules, mode)
        log.append({"processor": "dependency_graph", "sccs": [list(c) for c in components]})
        for comp in components:
            sub_dps = [cur_dps[i] for i in comp]
            sub_rules = cur_rules
            if mode is Mode.INNERMOST:
                sub_rules = _usable_rules(sub_dps, cur_rules)
                log.append({"processor": "usable_rules", "kept": len(sub_rules)})
            answer = _reduction_pair(sub_dps, sub_rules, budget.coeff_bound, search)
            if answer is None:
                log.append({"processor": "reduction_pair", "result": "no model"})
                return False, log
            removed, rendered = answer
            log.append(
                {
                    "processor": "reduction_pair",
                    "strict": removed,
                    "interpretation": rendered,
                }
            )
            rest = [dp for i, dp in enumerate(sub_dps) if i not in set(removed)]
            if rest:
                todo.append((rest, sub_rules))
    return True, log
