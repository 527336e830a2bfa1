"""Command line interface.

    adpprover prove FILE --goal ast|iast [options]

Exit codes: 0 proved, 2 maybe, 1 input or usage error.
"""

from __future__ import annotations

import argparse
import sys

from .parser import ParseError, parse_ptrs
from .prover import Goal, ProverConfig, prove, render_proof
from .ptrs import RedexPolicy
from .simulate import Estimate, SimConfig, estimate_termination


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="adpprover")
    sub = top.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prove", help="prove almost-sure termination")
    p.add_argument("file")
    p.add_argument("--goal", choices=["ast", "iast"], required=True)
    p.add_argument("--timeout", type=float, default=60.0, metavar="SECS")
    p.add_argument("--coeff-bound", type=int, default=3, metavar="N")
    p.add_argument("--bilinear", action="store_true")
    p.add_argument("--max-transform", type=int, default=12, metavar="N")
    p.add_argument("--smt-solver", metavar="PATH")
    p.add_argument("--proof", choices=["human", "structured"], default="human")
    p.add_argument("--simulate", type=int, metavar="SAMPLES")
    p.add_argument("--steps", type=int, default=1000, metavar="CAP")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    return top


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        with open(args.file, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        system = parse_ptrs(text)
    except ParseError as exc:
        print(f"error: {args.file}:{exc}", file=sys.stderr)
        return 1

    goal = Goal(args.goal)
    cfg = ProverConfig(
        timeout=args.timeout,
        coeff_bound=args.coeff_bound,
        bilinear=args.bilinear,
        max_transformations=args.max_transform,
        smt_solver=args.smt_solver,
    )
    verdict, proof = prove(system, goal, cfg)
    print(verdict)
    print(render_proof(proof, args.proof))

    if args.simulate:
        start = _default_start(system)
        sim = SimConfig(
            strategy=RedexPolicy.RANDOM,
            step_cap=args.steps,
            samples=args.simulate,
            seed=args.seed,
        )
        est = estimate_termination(system, start, sim)
        print(_render_estimate(start, est))

    return 0 if verdict.proved else 2


def _default_start(system):
    """Instantiated first left-hand side with fresh constants as arguments."""
    from .terms import App, Var, variables, substitute

    lhs = system.rules[0].lhs
    consts = sorted(s for s, n in system.signature.arities.items() if n == 0)
    filler = App(consts[0]) if consts else App("_unit")
    sigma = {x: filler for x in variables(lhs)}
    return substitute(lhs, sigma)


def _render_estimate(start, est: Estimate) -> str:
    return (
        f"simulate: start {start} | point {est.point:.4f} "
        f"| ci [{est.ci_low:.4f}, {est.ci_high:.4f}] | samples {est.samples} | seed {est.seed}"
    )


if __name__ == "__main__":
    raise SystemExit(main())
