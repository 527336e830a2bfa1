"""Dependency graph estimation and the graph-based processors.

Edges are estimated with the usual skeleton test: abstract every subterm
that some plain rule could rewrite, then unify with the candidate
left-hand side.  Abstraction is unification-gated: a defined-rooted
subterm survives when no (flag-true) left-hand side unifies with its own
skeleton, which is what lets normal forms like h(a) act as rigid context.
For full rewriting variables are renamed apart as well, since they may be
instantiated with reducible terms.  The gate set only contains flag-true
ADPs: flag-false ones cannot rewrite below marks without erasing them.

The same single-step test drives the usable-terms processor: a marked
subterm stays usable iff its skeleton reaches some left-hand side of an
ADP that still carries marks.  Roots are invariant under plain steps, so
no transitive closure is needed on top of the unification test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .adp import ADP, ADPProblem, Mode, is_anf_adp, np_rules
from .results import Refusal
from .terms import (
    App,
    FreshVars,
    Position,
    Term,
    Var,
    anno,
    anno_root,
    annotated_positions,
    annotated_subterms,
    flat,
    rename_apart,
    substitute,
    subterm_at,
    unify,
    variables,
)


# ---------------------------------------------------------------------------
# unification-gated abstraction


def _gated_cap(t: Term, gate_lhss: list[Term], rename_vars: bool) -> Term:
    """Skeleton of t that survives plain rewriting below the root.

    Bottom-up: a defined-rooted subterm is replaced by a fresh variable as
    soon as some gate lhs unifies with its already-abstracted form.  With
    rename_vars (full rewriting) variable occurrences become fresh too.
    """
    fresh = FreshVars()

    def go(u: Term) -> Term:
        if isinstance(u, Var):
            return fresh.next() if rename_vars else u
        capped = App(u.sym, tuple(go(a) for a in u.args), u.annotated)
        if capped.annotated:
            return capped  # no lhs has a marked root
        for lhs in gate_lhss:
            renamed, _ = rename_apart(lhs, set(variables(capped)), hint="_g")
            if unify(capped, renamed) is not None:
                return fresh.next()
        return capped

    return go(t)


def estimation_skeleton(t_sharp: Term, problem: ADPProblem, mode: Mode) -> Term:
    gates = [a.lhs for a in problem.adps if a.flag]
    return _gated_cap(t_sharp, gates, rename_vars=(mode is Mode.FULL))


def _connects(
    skeleton: Term,
    source_lhs: Term,
    target_lhs: Term,
    problem: ADPProblem,
    mode: Mode,
) -> bool:
    """Whether the skeleton may reach an instance of the target lhs."""
    taken = set(variables(skeleton)) | set(variables(source_lhs))
    renamed, _ = rename_apart(anno_root(target_lhs), taken, hint="_t")
    delta = unify(skeleton, renamed)
    if delta is None:
        return False
    if mode is Mode.INNERMOST:
        if not is_anf_adp(substitute(source_lhs, delta), problem):
            return False
        if not is_anf_adp(substitute(renamed, delta), problem):
            return False
    return True


# ---------------------------------------------------------------------------
# dependency graph


@dataclass(frozen=True)
class DepGraph:
    nodes: int
    edges: tuple[frozenset[int], ...]
    mode: Mode

    def successors(self, i: int) -> frozenset[int]:
        return self.edges[i]

    def render(self) -> str:
        """Plain edge-list dump for debugging."""
        lines = [f"digraph {{  # mode={self.mode.value}"]
        for i, succ in enumerate(self.edges):
            for j in sorted(succ):
                lines.append(f"  {i} -> {j}")
        lines.append("}")
        return "\n".join(lines)


def estimate_dep_graph(problem: ADPProblem, mode: Mode) -> DepGraph:
    n = len(problem.adps)
    edges = []
    for a in problem.adps:
        succ = set()
        skeletons = [
            estimation_skeleton(anno_root(t), problem, mode)
            for _, r in a.rhs
            for _, t in annotated_subterms(r)
        ]
        for j, b in enumerate(problem.adps):
            if any(_connects(sk, a.lhs, b.lhs, problem, mode) for sk in skeletons):
                succ.add(j)
        edges.append(frozenset(succ))
    return DepGraph(n, tuple(edges), mode)


def sccs(graph: DepGraph) -> list[list[int]]:
    """Nontrivial strongly connected components, reverse-topological order.

    Singletons count only when self-edged.  Tarjan emits sinks first,
    which is exactly the reverse-topological order we promise.
    """
    index_counter = [0]
    index: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[list[int]] = []

    def strongconnect(v: int):
        index[v] = lowlink[v] = index_counter[0]
        index_counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in sorted(graph.successors(v)):
            if w not in index:
                strongconnect(w)
                lowlink[v] = min(lowlink[v], lowlink[w])
            elif w in on_stack:
                lowlink[v] = min(lowlink[v], index[w])
        if lowlink[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            if len(comp) > 1 or v in graph.successors(v):
                out.append(sorted(comp))

    for v in range(graph.nodes):
        if v not in index:
            strongconnect(v)
    return out


def proc_dependency_graph(
    problem: ADPProblem, mode: Mode
) -> tuple[list[ADPProblem], dict]:
    """One sub-problem per SCC; ADPs outside it lose their marks."""
    graph = estimate_dep_graph(problem, mode)
    components = sccs(graph)
    subproblems = []
    for comp in components:
        comp_set = set(comp)
        adps = tuple(
            a if i in comp_set else a.flattened()
            for i, a in enumerate(problem.adps)
        )
        subproblems.append(ADPProblem(adps, problem.signature))
    info = {
        "sccs": [list(c) for c in components],
        "edges": sorted((i, j) for i, succ in enumerate(graph.edges) for j in succ),
    }
    return subproblems, info


# ---------------------------------------------------------------------------
# usable terms


def proc_usable_terms(problem: ADPProblem, mode: Mode) -> tuple[ADPProblem, dict]:
    """Drop root marks of subterms that cannot reach a marked ADP."""
    defined = problem.signature.defined
    targets = [b for b in problem.adps if b.has_annotations()]
    removed: list[str] = []

    def keep(source: ADP, r: Term, pi: Position) -> bool:
        t_sharp = anno_root(flat(subterm_at(r, pi)))
        skeleton = estimation_skeleton(t_sharp, problem, mode)
        return any(
            _connects(skeleton, source.lhs, b.lhs, problem, mode) for b in targets
        )

    new_adps = []
    for a in problem.adps:
        def prune(r: Term) -> Term:
            marked = annotated_positions(r)
            kept = {pi for pi in marked if keep(a, r, pi)}
            if set(marked) == kept:
                return r
            removed.extend(f"{a.lhs}:{'.'.join(map(str, pi)) or 'e'}" for pi in sorted(set(marked) - kept))
            return anno(r, kept, defined)

        new_adps.append(a.map_rhs(prune))
    return ADPProblem(tuple(new_adps), problem.signature), {"removed": removed}


# ---------------------------------------------------------------------------
# usable rules (innermost only)


def usable_rule_indices(problem: ADPProblem) -> set[int]:
    """Indices of ADPs reachable below marks with normal-form bindings."""
    by_root: dict[str, list[int]] = {}
    for i, a in enumerate(problem.adps):
        if a.flag:
            assert isinstance(a.lhs, App)
            by_root.setdefault(a.lhs.sym, []).append(i)

    def usable(t: Term, active: frozenset[int]) -> set[int]:
        if isinstance(t, Var):
            return set()
        if t.annotated:
            hits: list[int] = []  # marked roots never match a lhs
        else:
            hits = [i for i in by_root.get(t.sym, []) if i in active]
        rest = active - set(hits)
        out = set(hits)
        for arg in t.args:
            out |= usable(arg, rest)
        for i in hits:
            for _, r in problem.adps[i].rhs:
                out |= usable(flat(r), rest)
        return out

    all_active = frozenset(range(len(problem.adps)))
    out: set[int] = set()
    for a in problem.adps:
        for _, r in a.rhs:
            for _, t in annotated_subterms(r):
                out |= usable(anno_root(t), all_active)
    return out


def proc_usable_rules(
    problem: ADPProblem, mode: Mode
) -> tuple[Optional[ADPProblem], dict] | Refusal:
    """Flip the flag of every non-usable ADP to false (innermost only)."""
    if mode is not Mode.FULL and mode is not Mode.INNERMOST:
        raise ValueError(mode)
    if mode is Mode.FULL:
        return Refusal.of("usable_rules", "unsound for full rewriting")
    usable = usable_rule_indices(problem)
    new_adps = tuple(
        a if i in usable or not a.flag else a.with_flag(False)
        for i, a in enumerate(problem.adps)
    )
    info = {"usable": sorted(usable)}
    return ADPProblem(new_adps, problem.signature), info
