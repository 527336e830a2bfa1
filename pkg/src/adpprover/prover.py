"""Proof search: the processor strategy loop, proof trees, verdicts.

The strategy per sub-problem is fixed: dependency graph, usable terms,
then (innermost only) usable rules and the subterm criterion, then the
reduction pair, probability removal, and transformations last, budgeted
per problem so instantiation families cannot grow forever.  A problem is
solved once no right-hand side carries a mark.  Verdicts are only ever
Proved or Maybe: there is no disproof route.

Between transformations every other processor strictly shrinks the pair
(mark count, true-flag count) or splits the problem, so the loop
terminates; a wall-clock deadline and a node cap guard the rest.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from typing import Optional

from .adp import ADP, ADPProblem, Mode, canonical_adps
from .graph import proc_dependency_graph, proc_usable_rules, proc_usable_terms
from .orders import (
    SolveBudget,
    proc_probability_removal,
    proc_reduction_pair,
    proc_subterm_criterion,
)
from .ptrs import PTRS, analyze_properties
from .results import Refusal
from .smt import SmtConfig
from .terms import App, Position, Term, size, subterms
from .transform import (
    proc_forward_instantiation,
    proc_instantiation,
    proc_rewriting,
    proc_rule_overlap_instantiation,
)


class Goal(enum.Enum):
    AST = "ast"
    IAST = "iast"

    @property
    def mode(self) -> Mode:
        return Mode.FULL if self is Goal.AST else Mode.INNERMOST


@dataclass(frozen=True)
class ProverConfig:
    timeout: float = 60.0
    coeff_bound: int = 3
    bilinear: bool = False
    max_transformations: int = 12
    size_cap: int = 200
    max_nodes: int = 2000
    smt_solver: Optional[str] = None
    smt_timeout: float = 10.0

    def solve_budget(self, deadline) -> SolveBudget:
        smt = SmtConfig(self.smt_solver, self.smt_timeout) if self.smt_solver else None
        return SolveBudget(self.coeff_bound, deadline=deadline, smt=smt)


@dataclass
class ProofNode:
    processor: str
    params: dict
    justification: dict
    status: str  # solved | open | expanded
    problem: str
    children: list["ProofNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "processor": self.processor,
            "params": self.params,
            "justification": self.justification,
            "status": self.status,
            "problem": self.problem,
            "children": [c.to_dict() for c in self.children],
        }

    def all_solved(self) -> bool:
        if self.status == "open":
            return False
        if self.children:
            return all(c.all_solved() for c in self.children)
        return self.status == "solved"

    def first_open(self, path="root") -> Optional[str]:
        if self.status == "open":
            reason = self.justification.get("reason", "stalled")
            return f"{reason} at {path}"
        for i, c in enumerate(self.children):
            found = c.first_open(f"{path}.{i}")
            if found:
                return found
        return None


@dataclass(frozen=True)
class Verdict:
    proved: bool
    goal: Goal
    reason: Optional[str] = None

    def __str__(self):
        if self.proved:
            return f"Proved({self.goal.value.upper()})"
        return f"Maybe({self.reason})"


def _adp_size(a: ADP) -> int:
    return size(a.lhs) + sum(size(r) for _, r in a.rhs)


def _postorder_positions(t: Term) -> list[Position]:
    out: list[Position] = []

    def go(u: Term, pos: Position):
        if isinstance(u, App):
            for i, arg in enumerate(u.args, 1):
                go(arg, pos + (i,))
        out.append(pos)

    go(t, ())
    return out


class _Search:
    def __init__(self, mode: Mode, cfg: ProverConfig):
        self.mode = mode
        self.cfg = cfg
        self.deadline = time.monotonic() + cfg.timeout
        self.nodes = 0

    def out_of_time(self) -> bool:
        return time.monotonic() > self.deadline

    def node_budget_left(self) -> bool:
        self.nodes += 1
        return self.nodes <= self.cfg.max_nodes

    def budget(self) -> SolveBudget:
        return self.cfg.solve_budget(self.out_of_time)

    # -- strategy ----------------------------------------------------------

    def solve(self, problem: ADPProblem, tbudget: int, skip_graph: bool = False) -> ProofNode:
        shown = str(problem)
        if not self.node_budget_left():
            return ProofNode("none", {}, {"reason": "node budget exhausted"}, "open", shown)
        if self.out_of_time():
            return ProofNode("none", {}, {"reason": "timeout"}, "open", shown)
        if not problem.has_annotations():
            return ProofNode(
                "none", {}, {"note": "no annotations -- solved"}, "solved", shown
            )

        if not skip_graph:
            subproblems, info = proc_dependency_graph(problem, self.mode)
            if not subproblems:
                return ProofNode(
                    "dependency_graph", {}, info | {"note": "no cycles"}, "solved", shown
                )
            if len(subproblems) == 1 and subproblems[0].canonical_key() == problem.canonical_key():
                child = self.solve(problem, tbudget, skip_graph=True)
                return ProofNode("dependency_graph", {}, info, "expanded", shown, [child])
            children = [self.solve(p, self.cfg.max_transformations) for p in subproblems]
            return ProofNode("dependency_graph", {}, info, "expanded", shown, children)

        key = problem.canonical_key()

        new_problem, info = proc_usable_terms(problem, self.mode)
        if new_problem.canonical_key() != key:
            child = self.solve(new_problem, tbudget)
            return ProofNode("usable_terms", {}, info, "expanded", shown, [child])

        if self.mode is Mode.INNERMOST:
            outcome = proc_usable_rules(problem, self.mode)
            assert not isinstance(outcome, Refusal)
            new_problem, info = outcome
            if new_problem is not None and new_problem.canonical_key() != key:
                child = self.solve(new_problem, tbudget)
                return ProofNode("usable_rules", {}, info, "expanded", shown, [child])

            sc = proc_subterm_criterion(problem, self.mode)
            if not isinstance(sc, Refusal):
                new_problem, info = sc
                if new_problem is not None and new_problem.canonical_key() != key:
                    child = self.solve(new_problem, tbudget)
                    return ProofNode(
                        "subterm_criterion", {}, info, "expanded", shown, [child]
                    )

        new_problem, info = proc_reduction_pair(
            problem, self.mode, self.budget(), self.cfg.bilinear
        )
        if new_problem is not None and new_problem.canonical_key() != key:
            child = self.solve(new_problem, tbudget)
            return ProofNode("reduction_pair", {}, info, "expanded", shown, [child])

        pr = proc_probability_removal(problem, self.mode, self.budget())
        if not isinstance(pr, Refusal):
            solved, info = pr
            if solved:
                return ProofNode("probability_removal", {}, info, "solved", shown)
            # backend gave up: fall through to transformations

        applied = self.try_transformations(problem, tbudget, shown)
        if applied is not None:
            return applied

        reason = "timeout" if self.out_of_time() else "no processor applies"
        return ProofNode("none", {}, {"reason": reason}, "open", shown)

    # -- transformations ----------------------------------------------------

    def _acceptable(self, problem: ADPProblem, out: ADPProblem) -> bool:
        if out.canonical_key() == problem.canonical_key():
            return False
        return all(_adp_size(a) <= self.cfg.size_cap for a in out.adps)

    def try_transformations(
        self, problem: ADPProblem, tbudget: int, shown: str
    ) -> Optional[ProofNode]:
        if tbudget <= 0 or self.out_of_time():
            return None

        def wrap(name: str, out: ADPProblem, info: dict) -> ProofNode:
            child = self.solve(out, tbudget - 1)
            return ProofNode(name, {}, info, "expanded", shown, [child])

        if self.mode is Mode.INNERMOST:
            for i, a in enumerate(problem.adps):
                order = sorted(
                    range(len(a.rhs.entries)),
                    key=lambda j: (-a.rhs.entries[j][0], j),
                )
                for j in order:
                    _, r = a.rhs.entries[j]
                    for pos in _postorder_positions(r):
                        result = proc_rewriting(problem, i, j, pos, self.mode)
                        if isinstance(result, Refusal):
                            continue
                        out, info = result
                        if self._acceptable(problem, out):
                            return wrap("rewriting", out, info)

        for name, proc in (
            ("instantiation", proc_instantiation),
            ("forward_instantiation", proc_forward_instantiation),
        ):
            for i, a in enumerate(problem.adps):
                if not a.has_annotations():
                    continue
                out, info = proc(problem, i, self.mode)
                if info.get("useful") and self._acceptable(problem, out):
                    return wrap(name, out, info)

        if self.mode is Mode.INNERMOST:
            from .terms import annotated_positions

            for i, a in enumerate(problem.adps):
                if not a.has_annotations():
                    continue
                for j, (_, r) in enumerate(a.rhs.entries):
                    for pos in annotated_positions(r):
                        result = proc_rule_overlap_instantiation(
                            problem, i, j, pos, self.mode
                        )
                        if isinstance(result, Refusal):
                            continue
                        out, info = result
                        if self._acceptable(problem, out):
                            return wrap("rule_overlap_instantiation", out, info)
        return None


def prove_adp_problem(
    problem: ADPProblem, goal: Goal, cfg: ProverConfig = ProverConfig()
) -> tuple[Verdict, ProofNode]:
    search = _Search(goal.mode, cfg)
    root = search.solve(problem, cfg.max_transformations)
    if root.all_solved():
        return Verdict(True, goal), root
    return Verdict(False, goal, root.first_open() or "stalled"), root


def prove(
    system: PTRS, goal: Goal, cfg: ProverConfig = ProverConfig()
) -> tuple[Verdict, ProofNode]:
    """Decide the goal for a probabilistic rewrite system, or say Maybe."""
    if goal is Goal.AST:
        props = analyze_properties(system)
        if not props.non_duplicating:
            node = ProofNode(
                "chain_criterion",
                {"goal": goal.value},
                {"reason": "duplicating rule: full-rewriting analysis needs a non-duplicating system"},
                "open",
                str(system),
            )
            return Verdict(False, goal, "chain criterion requires non-duplicating"), node
    problem = canonical_adps(system)
    verdict, root = prove_adp_problem(problem, goal, cfg)
    wrapped = ProofNode(
        "chain_criterion",
        {"goal": goal.value},
        {"note": "canonical marked-pair construction"},
        "expanded",
        str(system),
        [root],
    )
    return verdict, wrapped


# ---------------------------------------------------------------------------
# rendering


def render_proof(root: ProofNode, fmt: str = "human") -> str:
    if fmt == "structured":
        return json.dumps(root.to_dict(), sort_keys=True, indent=1)
    if fmt != "human":
        raise ValueError(f"unknown format {fmt!r}")
    lines: list[str] = []

    def emit(node: ProofNode, depth: int):
        pad = "  " * depth
        if node.processor == "none":
            note = node.justification.get("note") or node.justification.get("reason")
            lines.append(f"{pad}[{node.status}] {note}")
        else:
            just = {k: v for k, v in node.justification.items()}
            detail = json.dumps(just, sort_keys=True, default=str)
            lines.append(f"{pad}[{node.status}] {node.processor} {detail}")
        for line in node.problem.splitlines():
            lines.append(f"{pad}  | {line}")
        for c in node.children:
            emit(c, depth + 1)

    emit(root, 0)
    return "\n".join(lines)


def parse_structured_proof(text: str) -> ProofNode:
    def build(d: dict) -> ProofNode:
        return ProofNode(
            d["processor"],
            d["params"],
            d["justification"],
            d["status"],
            d["problem"],
            [build(c) for c in d["children"]],
        )

    return build(json.loads(text))
