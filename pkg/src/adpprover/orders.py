"""Order-based processors: reduction pairs, subterm criterion, and the
bridge to the non-probabilistic dependency pair backend.

The reduction pair compares mark-sums: the value of a term is the sum of
the interpretations of its marked subterms (lifted to their marked twin
at the root).  Per ADP we require the expected mark-sum to be weakly
decreasing; the processor deletes the marks of a chosen set of ADPs for
which one branch decreases strictly (plus, for flag-true ADPs, a weak
plain-value decrease on the same branch), and flag-true ADPs must also be
weakly decreasing in expectation when ignoring marks entirely.

All probability weights stay exact; denominators are cleared before the
coefficient-wise comparison.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .adp import (
    ADP,
    ADPProblem,
    Mode,
    dp_pairs,
    np_rules,
)
from .poly import (
    ArithConstraint,
    PolyInterpretation,
    SearchBudget,
    SymbolicInterpretation,
    SymbolicPoly,
    poly_add,
    poly_scale,
    reduce_inequality,
    solve_constraints,
)
from .results import Refusal
from .smt import SmtConfig, try_external_solver
from .terms import (
    App,
    Term,
    Var,
    anno_root,
    annotated_positions,
    annotated_subterms,
    flat,
    subterm_at,
    subterms,
)


def sharp_sum(t: Term, interp: SymbolicInterpretation) -> SymbolicPoly:
    """Sum of interpretations of t's marked subterms, roots lifted."""
    total: SymbolicPoly = {}
    for _, u in annotated_subterms(t):
        total = poly_add(total, interp.evaluate(anno_root(u)))
    return total


def expected(polys: list[tuple[Fraction, SymbolicPoly]]) -> SymbolicPoly:
    out: SymbolicPoly = {}
    for p, poly in polys:
        out = poly_add(out, poly_scale(poly, p))
    return out


# ---------------------------------------------------------------------------
# constraint generation


@dataclass(frozen=True)
class SemanticConstraint:
    """lhs >= rhs (or >) as polynomials over rule variables."""

    lhs: SymbolicPoly
    rhs: SymbolicPoly
    strict: bool
    origin: str

    def reduced(self) -> list[ArithConstraint]:
        return reduce_inequality(self.lhs, self.rhs, self.strict, self.origin)


@dataclass
class StrictOption:
    """Constraints activated when ADP adp_index is oriented strictly via
    its branch branch_index."""

    adp_index: int
    branch_index: int
    constraints: list[SemanticConstraint]


@dataclass
class ConstraintSet:
    base: list[SemanticConstraint]
    options: dict[int, list[StrictOption]]  # adp index -> per-branch options
    interp: SymbolicInterpretation


def generate_rpp_constraints(
    problem: ADPProblem, bilinear: bool = False
) -> ConstraintSet:
    interp = SymbolicInterpretation(bilinear=bilinear)
    base: list[SemanticConstraint] = []
    options: dict[int, list[StrictOption]] = {}

    for i, a in enumerate(problem.adps):
        lhs_sharp = interp.evaluate(anno_root(a.lhs))
        branch_sums = [(p, sharp_sum(r, interp)) for p, r in a.rhs]
        base.append(
            SemanticConstraint(
                lhs_sharp, expected(branch_sums), False, f"adp{i}.expected-mark-sum"
            )
        )
        if a.flag:
            lhs_plain = interp.evaluate(a.lhs)
            plain = [(p, interp.evaluate(flat(r))) for p, r in a.rhs]
            base.append(
                SemanticConstraint(
                    lhs_plain, expected(plain), False, f"adp{i}.expected-plain"
                )
            )
        if not a.has_annotations():
            continue
        opts = []
        for j, (p, r) in enumerate(a.rhs):
            cs = [
                SemanticConstraint(
                    lhs_sharp, branch_sums[j][1], True, f"adp{i}.strict-branch{j}"
                )
            ]
            if a.flag:
                cs.append(
                    SemanticConstraint(
                        interp.evaluate(a.lhs),
                        interp.evaluate(flat(r)),
                        False,
                        f"adp{i}.weak-plain-branch{j}",
                    )
                )
            opts.append(StrictOption(i, j, cs))
        options[i] = opts
    return ConstraintSet(base, options, interp)


def reduce_to_coefficient_constraints(
    constraints: list[SemanticConstraint],
) -> list[ArithConstraint]:
    out = []
    for c in constraints:
        out.extend(c.reduced())
    return out


# ---------------------------------------------------------------------------
# solving


@dataclass(frozen=True)
class SolveBudget:
    coeff_bound: int = 3
    max_assignments: int = 400_000
    deadline: Optional[Callable[[], bool]] = None
    smt: Optional[SmtConfig] = None


@dataclass(frozen=True)
class RppModel:
    interpretation: PolyInterpretation
    strict: tuple[tuple[int, int], ...]  # (adp index, branch index)


def _strict_subsets(candidates: list[int]) -> list[tuple[int, ...]]:
    if len(candidates) <= 5:
        out = []
        for size in range(1, len(candidates) + 1):
            out.extend(itertools.combinations(candidates, size))
        return out
    out = [(c,) for c in candidates]
    out.extend(itertools.combinations(candidates, 2))
    out.append(tuple(candidates))
    return out


def solve_coefficients(cs: ConstraintSet, budget: SolveBudget) -> Optional[RppModel]:
    """Model with a nonempty strictly-oriented set, or None.

    Tries the external solver first when configured (the whole selector
    problem goes into one query); otherwise, or on anything but a clear
    answer, enumerates strict sets and runs the internal search.
    """
    candidates = sorted(cs.options)
    if not candidates:
        return None

    if budget.smt is not None:
        answer = try_external_solver(cs, budget.smt)
        if answer is not None:
            values, strict = answer
            if not values and not strict:
                return None  # definite unsat
            return RppModel(
                PolyInterpretation(tuple(sorted(values.items()))), tuple(strict)
            )

    base_reduced = reduce_to_coefficient_constraints(cs.base)
    option_reduced: dict[tuple[int, int], list[ArithConstraint]] = {}
    for i in candidates:
        for opt in cs.options[i]:
            option_reduced[(i, opt.branch_index)] = reduce_to_coefficient_constraints(
                opt.constraints
            )

    search = SearchBudget(budget.max_assignments, budget.deadline)
    for subset in _strict_subsets(candidates):
        branch_choices = [
            [(i, o.branch_index) for o in cs.options[i]] for i in subset
        ]
        for combo in itertools.product(*branch_choices):
            constraints = list(base_reduced)
            for key in combo:
                constraints.extend(option_reduced[key])
            model = solve_constraints(constraints, budget.coeff_bound, search)
            if model is not None:
                names = set(cs.interp.unknowns())
                values = {n: model.get(n, 0) for n in names}
                return RppModel(
                    PolyInterpretation(tuple(sorted(values.items()))), tuple(combo)
                )
            if search.remaining <= 0:
                return None
    return None


# ---------------------------------------------------------------------------
# reduction pair processor


def proc_reduction_pair(
    problem: ADPProblem,
    mode: Mode,
    budget: SolveBudget = SolveBudget(),
    bilinear: bool = False,
) -> tuple[Optional[ADPProblem], dict]:
    """Flatten the strictly oriented ADPs, or None without a model."""
    cs = generate_rpp_constraints(problem, bilinear=bilinear)
    model = solve_coefficients(cs, budget)
    if model is None:
        return None, {}
    strict_indices = {i for i, _ in model.strict}
    new_adps = tuple(
        a.flattened() if i in strict_indices else a
        for i, a in enumerate(problem.adps)
    )
    info = {
        "interpretation": model.interpretation.render(),
        "strict": sorted(strict_indices),
    }
    return ADPProblem(new_adps, problem.signature), info


# ---------------------------------------------------------------------------
# subterm criterion (innermost only)


def proc_subterm_criterion(
    problem: ADPProblem, mode: Mode
) -> tuple[Optional[ADPProblem], dict] | Refusal:
    if mode is Mode.FULL:
        return Refusal.of(
            "subterm_criterion", "unsound for full rewriting"
        )
    for a in problem.adps:
        for _, r in a.rhs:
            if len(annotated_positions(r)) > 1:
                return Refusal.of(
                    "subterm_criterion",
                    "needs at most one mark per right-hand-side term",
                    adp=str(a),
                )

    # (marked lhs root, marked rhs subterm root) pairs to constrain
    comparisons: list[tuple[int, Term, Term]] = []
    roots: dict[str, int] = {}
    for i, a in enumerate(problem.adps):
        for _, r in a.rhs:
            for _, t in annotated_subterms(r):
                assert isinstance(a.lhs, App) and isinstance(t, App)
                comparisons.append((i, a.lhs, t))
                roots.setdefault(a.lhs.sym, len(a.lhs.args))
                roots.setdefault(t.sym, len(t.args))
    if not comparisons:
        return None, {}

    def proj(term: Term, choice: dict[str, int]) -> Term:
        assert isinstance(term, App)
        if not term.args:
            return anno_root(term)
        return term.args[choice[term.sym] - 1]

    def subterm_of(small: Term, big: Term) -> bool:
        return any(u == small for _, u in subterms(big))

    names = sorted(roots)
    domains = [range(1, max(roots[nm], 1) + 1) for nm in names]
    for combo in itertools.product(*domains):
        choice = dict(zip(names, combo))
        strict: set[int] = set()
        ok = True
        for i, lhs, t in comparisons:
            pl, pt = proj(lhs, choice), proj(t, choice)
            if pl == pt:
                continue
            if subterm_of(pt, pl):
                strict.add(i)
            else:
                ok = False
                break
        if ok and strict:
            new_adps = tuple(
                a.flattened() if i in strict else a
                for i, a in enumerate(problem.adps)
            )
            info = {
                "projection": {nm: choice[nm] for nm in names if roots[nm]},
                "strict": sorted(strict),
            }
            return ADPProblem(new_adps, problem.signature), info
    return None, {}


# ---------------------------------------------------------------------------
# probability removal and the non-probabilistic backend


def nonprob_dp_prove(
    dps: list[tuple[Term, Term]],
    rules: list[tuple[Term, Term]],
    mode: Mode,
    budget: SolveBudget = SolveBudget(),
) -> tuple[bool, list[dict]]:
    """Graph / usable rules / reduction pair loop on a plain DP problem."""
    from .nonprob import prove_dp_problem

    return prove_dp_problem(dps, rules, mode, budget)


def proc_probability_removal(
    problem: ADPProblem,
    mode: Mode,
    budget: SolveBudget = SolveBudget(),
) -> tuple[Optional[bool], dict] | Refusal:
    """Delegate a trivial-probability problem to the plain DP backend.

    True means solved; None means the backend could not finish the proof
    (never a disproof).
    """
    if not all(a.rhs.is_dirac() for a in problem.adps):
        return Refusal.of("probability_removal", "non-trivial probabilities present")
    dps = dp_pairs(problem)
    rules = np_rules(problem)
    if not dps:
        return True, {"note": "no dependency pairs"}
    proved, log = nonprob_dp_prove(dps, rules, mode, budget)
    if proved:
        return True, {"backend": log}
    return None, {"backend": log}
