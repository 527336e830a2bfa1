"""Empirical and exact-bounded exploration of rewrite behavior.

Monte-Carlo sampling estimates the probability that a run reaches a
normal form within a step cap, with a Wilson confidence interval; paths
that hit the cap count as non-terminated, so the estimate is conservative
for termination.  Exact mode expands the tree of one deterministic redex
policy to a depth cap and sums the leaf mass, a certified lower bound on
the termination probability for that policy.  Sampling uses a mutable
term representation with an incrementally maintained redex agenda, since
agenda-rebuilding per step would dominate on growing terms.

None of this proves anything; the prover never consults the simulator.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Optional

from .adp import ADPProblem, ADPStep, VRFPolicy, adp_step_full, adp_step_innermost
from .ptrs import PTRS, MultiDistribution, RedexPolicy, Step, enumerate_steps, ptrs_step
from .terms import App, Position, Term, Var, match, subterms


class SimMode(enum.Enum):
    RST = "rst"
    CHAIN_TREE = "chain-tree"


@dataclass(frozen=True)
class SimConfig:
    mode: SimMode = SimMode.RST
    strategy: RedexPolicy = RedexPolicy.RANDOM
    vrf_policy: VRFPolicy = VRFPolicy.KEEP_LEFTMOST
    chain_innermost: bool = True
    exact: bool = False
    step_cap: int = 1000
    samples: int = 1000
    seed: int = 0
    depth_cap: int = 20
    workers: int = 8

    def __post_init__(self):
        if self.step_cap < 1:
            raise ValueError("step_cap must be at least 1")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.exact and self.strategy is RedexPolicy.RANDOM:
            raise ValueError("exact mode needs a deterministic policy")


@dataclass(frozen=True)
class Estimate:
    point: float
    ci_low: float
    ci_high: float
    samples: int
    seed: int
    truncated_mass: Optional[Fraction] = None
    exact_point: Optional[Fraction] = None

    def __post_init__(self):
        assert 0.0 <= self.ci_low <= self.point + 1e-12
        assert self.point <= self.ci_high + 1e-12 and self.ci_high <= 1.0 + 1e-12


def wilson_interval(hits: int, n: int, z: float = 2.5758) -> tuple[float, float]:
    """Wilson score interval (99% by default)."""
    if n == 0:
        return 0.0, 1.0
    phat = hits / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# mutable-term sampling engine (plain probabilistic rewriting)


class _MNode:
    __slots__ = ("sym", "args", "parent", "idx", "alive", "agended")

    def __init__(self, sym: str, args: list, parent, idx: int):
        self.sym = sym
        self.args = args
        self.parent = parent
        self.idx = idx
        self.alive = True
        self.agended: set[int] = set()


def _build(t: Term, parent=None, idx=0) -> _MNode:
    if isinstance(t, Var):
        node = _MNode("$" + t.name, [], parent, idx)
        return node
    node = _MNode(t.sym, [], parent, idx)
    node.args = [_build(a, node, i) for i, a in enumerate(t.args)]
    return node


def _node_eq(a: _MNode, b: _MNode) -> bool:
    if a.sym != b.sym or len(a.args) != len(b.args):
        return False
    return all(_node_eq(x, y) for x, y in zip(a.args, b.args))


def _matches(pattern: Term, node: _MNode, bind: dict) -> bool:
    if isinstance(pattern, Var):
        prev = bind.get(pattern.name)
        if prev is None:
            bind[pattern.name] = node
            return True
        return _node_eq(prev, node)
    if node.sym != pattern.sym or len(node.args) != len(pattern.args):
        return False
    return all(_matches(p, a, bind) for p, a in zip(pattern.args, node.args))


def _copy_node(node: _MNode, parent, idx) -> _MNode:
    out = _MNode(node.sym, [], parent, idx)
    out.args = [_copy_node(a, out, i) for i, a in enumerate(node.args)]
    return out


def _mark_dead(node: _MNode):
    node.alive = False
    for a in node.args:
        if a.alive:
            _mark_dead(a)


def _iter_nodes(node: _MNode):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.args)


class _Sampler:
    """One path at a time; the agenda holds every (node, rule) match."""

    def __init__(self, system: PTRS, start: Term):
        self.rules = list(system.rules)
        self.pattern_depth = max(
            (len(p) for r in self.rules for p, _ in subterms(r.lhs)), default=0
        )
        self.root = _build(start)
        self.agenda: list[tuple[_MNode, int]] = []
        for n in _iter_nodes(self.root):
            self._check_node(n)

    def _check_node(self, node: _MNode):
        for ri, rule in enumerate(self.rules):
            if ri in node.agended:
                continue
            if _matches(rule.lhs, node, {}):
                node.agended.add(ri)
                self.agenda.append((node, ri))

    def _instantiate(self, t: Term, bind: dict, used: set[int], parent, idx) -> _MNode:
        if isinstance(t, Var):
            matched = bind[t.name]
            if id(matched) not in used:
                used.add(id(matched))
                matched.parent = parent
                matched.idx = idx
                return matched
            return _copy_node(matched, parent, idx)
        node = _MNode(t.sym, [], parent, idx)
        node.args = [
            self._instantiate(a, bind, used, node, i) for i, a in enumerate(t.args)
        ]
        return node

    def rewrite(self, node: _MNode, rule_index: int, rhs_term: Term):
        bind: dict = {}
        ok = _matches(self.rules[rule_index].lhs, node, bind)
        assert ok
        used: set[int] = set()
        parent, idx = node.parent, node.idx
        replacement = self._instantiate(rhs_term, bind, used, parent, idx)
        # the matched pattern skeleton dies; moved substitution parts live on
        self._mark_pattern_dead(self.rules[rule_index].lhs, node, used)
        if parent is None:
            self.root = replacement
        else:
            parent.args[idx] = replacement
        for n in _iter_nodes(replacement):
            if n.alive:
                self._check_node(n)
        # only ancestors within pattern depth can change match status
        up = parent
        hops = 0
        while up is not None and hops < self.pattern_depth:
            self._check_node(up)
            up = up.parent
            hops += 1

    def _mark_pattern_dead(self, pattern: Term, node: _MNode, used: set[int]):
        if id(node) in used:
            return
        if isinstance(pattern, Var):
            _mark_dead(node)
            return
        node.alive = False
        for p, a in zip(pattern.args, node.args):
            self._mark_pattern_dead(p, a, used)

    def random_step(self, rng: random.Random) -> bool:
        """One uniform step among live matches; False when in normal form."""
        agenda = self.agenda
        while agenda:
            i = rng.randrange(len(agenda))
            node, ri = agenda[i]
            agenda[i] = agenda[-1]
            agenda.pop()
            node.agended.discard(ri)
            if not node.alive or not _matches(self.rules[ri].lhs, node, {}):
                continue
            rule = self.rules[ri]
            x = rng.random()
            acc = 0.0
            chosen = rule.rhs.entries[-1][1]
            for p, r in rule.rhs.entries:
                acc += float(p)
                if x < acc:
                    chosen = r
                    break
            self.rewrite(node, ri, chosen)
            return True
        return False

    def in_normal_form(self) -> bool:
        """Validate remaining agenda entries without consuming randomness."""
        agenda = self.agenda
        k = 0
        while k < len(agenda):
            node, ri = agenda[k]
            if node.alive and _matches(self.rules[ri].lhs, node, {}):
                return False
            agenda[k] = agenda[-1]
            agenda.pop()
            node.agended.discard(ri)
        return True


def _sample_rst_path(
    system: PTRS, start: Term, policy: RedexPolicy, step_cap: int, rng: random.Random
) -> bool:
    """True iff the path reaches a normal form within the cap."""
    if policy is RedexPolicy.RANDOM:
        sampler = _Sampler(system, start)
        for _ in range(step_cap):
            if not sampler.random_step(rng):
                return True
        return sampler.in_normal_form()
    # deterministic-position policies use the immutable stepper
    t = start
    for _ in range(step_cap):
        step = ptrs_step(t, system, policy, rng)
        if step is None:
            return True
        x = rng.random()
        acc = 0.0
        t = step.successors.entries[-1][1]
        for p, succ in step.successors.entries:
            acc += float(p)
            if x < acc:
                t = succ
                break
    return ptrs_step(t, system, policy, rng) is None


def _chain_steps(problem: ADPProblem, t: Term, cfg: SimConfig) -> list[ADPStep]:
    if cfg.chain_innermost:
        return adp_step_innermost(t, problem)
    return adp_step_full(t, problem, cfg.vrf_policy)


def _sample_chain_path(
    problem: ADPProblem, start: Term, cfg: SimConfig, rng: random.Random
) -> tuple[bool, int]:
    """(reached leaf?, number of marked steps) for one chain-tree path."""
    t = start
    marked_steps = 0
    for _ in range(cfg.step_cap):
        options = _chain_steps(problem, t, cfg)
        if not options:
            return True, marked_steps
        step = options[rng.randrange(len(options))]
        if step.case.value in ("at", "af"):
            marked_steps += 1
        x = rng.random()
        acc = 0.0
        t = step.successors.entries[-1][1]
        for p, succ in step.successors.entries:
            acc += float(p)
            if x < acc:
                t = succ
                break
    return False, marked_steps


def estimate_termination(
    subject: PTRS | ADPProblem, start: Term, cfg: SimConfig
) -> Estimate:
    """Monte-Carlo (or exact-bounded) estimate of the leaf probability."""
    if cfg.exact:
        if not isinstance(subject, PTRS):
            raise ValueError("exact mode works on plain systems")
        return _exact_estimate(subject, start, cfg)
    hits = 0
    for s in range(cfg.samples):
        stream = random.Random(f"{cfg.seed}/{s % cfg.workers}/{s // cfg.workers}")
        if isinstance(subject, PTRS):
            done = _sample_rst_path(subject, start, cfg.strategy, cfg.step_cap, stream)
        else:
            done, _ = _sample_chain_path(subject, start, cfg, stream)
        hits += done
    low, high = wilson_interval(hits, cfg.samples)
    return Estimate(hits / cfg.samples, low, high, cfg.samples, cfg.seed)


def _exact_estimate(system: PTRS, start: Term, cfg: SimConfig) -> Estimate:
    memo: dict[tuple[Term, int], Fraction] = {}

    def mass(t: Term, depth: int) -> Fraction:
        step = ptrs_step(t, system, cfg.strategy)
        if step is None:
            return Fraction(1)
        if depth == 0:
            return Fraction(0)
        key = (t, depth)
        if key in memo:
            return memo[key]
        total = Fraction(0)
        for p, succ in step.successors.entries:
            total += p * mass(succ, depth - 1)
        memo[key] = total
        return total

    point = mass(start, cfg.depth_cap)
    return Estimate(
        float(point),
        float(point),
        1.0,
        0,
        cfg.seed,
        truncated_mass=1 - point,
        exact_point=point,
    )


# ---------------------------------------------------------------------------
# adversarial policy search


@dataclass(frozen=True)
class Witness:
    drift: float
    depth: int
    trace: tuple[str, ...]


@dataclass(frozen=True)
class SearchBudgetSim:
    depth: int = 10
    max_states: int = 50_000


def _redex_count(t: Term, system: PTRS) -> int:
    count = 0
    for _, u in subterms(t):
        if isinstance(u, Var):
            continue
        if any(match(r.lhs, u) is not None for r in system.rules):
            count += 1
    return count


def adversarial_search(
    system: PTRS, start: Term, budget: SearchBudgetSim = SearchBudgetSim()
) -> Optional[Witness]:
    """Demonic search for an expected-redex-count increase (full rewriting).

    Heuristic evidence of non-termination only, never a proof: it returns
    the choice trace maximizing the expected number of redexes at some
    horizon, when that expectation exceeds the start count.
    """
    states = [0]
    memo: dict[tuple[Term, int], tuple[Fraction, tuple[str, ...]]] = {}

    def best(t: Term, depth: int) -> tuple[Fraction, tuple[str, ...]]:
        base = Fraction(_redex_count(t, system))
        if depth == 0 or states[0] > budget.max_states:
            return base, ()
        key = (t, depth)
        if key in memo:
            return memo[key]
        states[0] += 1
        options = enumerate_steps(t, system)
        if not options:
            return base, ()
        top: tuple[Fraction, tuple[str, ...]] = (Fraction(-1), ())
        for step in options:
            total = Fraction(0)
            deepest: tuple[str, ...] = ()
            deepest_val = Fraction(-1)
            for p, succ in step.successors.entries:
                val, trace = best(succ, depth - 1)
                total += p * val
                if val > deepest_val:
                    deepest_val, deepest = val, trace
            label = f"rule {step.rule_index} at {'.'.join(map(str, step.position)) or 'e'}"
            candidate = (total, (label,) + deepest)
            if candidate[0] > top[0]:
                top = candidate
        memo[key] = top
        return top

    start_count = _redex_count(start, system)
    if start_count == 0:
        return None
    for depth in range(1, budget.depth + 1):
        value, trace = best(start, depth)
        if value > start_count:
            return Witness(float(value - start_count), depth, trace)
    return None


# ---------------------------------------------------------------------------
# trace dump


def format_trace_line(p: Fraction, case: str, pos: Position, term: Term) -> str:
    pos_text = ".".join(map(str, pos)) or "e"
    return f"p {p} | case {case} | pos {pos_text} | term {term}"


def sample_trace(
    subject: PTRS | ADPProblem, start: Term, cfg: SimConfig
) -> list[str]:
    """One sampled path in the standard one-line-per-step format."""
    rng = random.Random(f"{cfg.seed}/trace")
    lines = []
    t = start
    p_acc = Fraction(1)
    for _ in range(cfg.step_cap):
        if isinstance(subject, PTRS):
            options = enumerate_steps(t, subject)
            if not options:
                break
            step = options[rng.randrange(len(options))]
            case = "-"
            pos = step.position
            succ_dist = step.successors
        else:
            chain = _chain_steps(subject, t, cfg)
            if not chain:
                break
            astep = chain[rng.randrange(len(chain))]
            case = astep.case.value.upper()
            pos = astep.position
            succ_dist = astep.successors
        x = rng.random()
        acc = 0.0
        p, t = succ_dist.entries[-1]
        for q, succ in succ_dist.entries:
            acc += float(q)
            if x < acc:
                p, t = q, succ
                break
        p_acc *= p
        lines.append(format_trace_line(p_acc, case, pos, t))
    return lines
