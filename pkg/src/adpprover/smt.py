"""External constraint solver interface (SMT-LIB 2, QF_NIA).

The whole reduction pair search goes out as one query: natural-number
unknowns for the coefficients, one boolean selector per candidate ADP,
one per (ADP, branch) choice, and implications activating the strict
constraint groups.  Anything but a clean `sat` (with a parsable model) or
`unsat` makes the caller fall back to the internal search.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:  # pragma: no cover
    from .orders import ConstraintSet

from .poly import ArithConstraint


@dataclass(frozen=True)
class SmtConfig:
    solver_path: str
    timeout: float = 10.0


class SmtFormatError(ValueError):
    """The solver answered, but not in the expected format."""


def _int_sexpr(n: int) -> str:
    return str(n) if n >= 0 else f"(- {-n})"


def _poly_sexpr(entries) -> str:
    parts = []
    for um, coeff in entries:
        if coeff == 1 and um:
            factors = list(um)
        else:
            factors = [_int_sexpr(coeff)] + list(um)
        if len(factors) == 1:
            parts.append(factors[0])
        else:
            parts.append("(* %s)" % " ".join(factors))
    if not parts:
        return "0"
    if len(parts) == 1:
        return parts[0]
    return "(+ %s)" % " ".join(parts)


def _constraint_sexpr(c: ArithConstraint) -> str:
    return f"(>= {_poly_sexpr(c.upoly)} {c.bound})"


def emit_script(cs: "ConstraintSet") -> tuple[str, list[str], list[tuple[str, tuple[int, int]]]]:
    """SMT-LIB text plus the names to query afterwards."""
    from .orders import reduce_to_coefficient_constraints

    unknowns = sorted(set(cs.interp.unknowns()))
    lines = [
        "(set-option :produce-models true)",
        "(set-logic QF_NIA)",
    ]
    for name in unknowns:
        smt_name = _mangle(name)
        lines.append(f"(declare-const {smt_name} Int)")
        lines.append(f"(assert (>= {smt_name} 0))")

    selector_names = []
    option_names: list[tuple[str, tuple[int, int]]] = []
    for i in sorted(cs.options):
        s = f"sel_{i}"
        selector_names.append(s)
        lines.append(f"(declare-const {s} Bool)")
        branch_bools = []
        for opt in cs.options[i]:
            t = f"sel_{i}_{opt.branch_index}"
            branch_bools.append(t)
            option_names.append((t, (i, opt.branch_index)))
            lines.append(f"(declare-const {t} Bool)")
            reduced = reduce_to_coefficient_constraints(opt.constraints)
            body = " ".join(_mangled_constraint(c) for c in reduced) or "true"
            lines.append(f"(assert (=> {t} (and {body})))")
        lines.append(f"(assert (=> {s} (or {' '.join(branch_bools)})))")
        for t in branch_bools:
            lines.append(f"(assert (=> {t} {s}))")
    if selector_names:
        lines.append(f"(assert (or {' '.join(selector_names)}))")

    for c in reduce_to_coefficient_constraints(cs.base):
        lines.append(f"(assert {_mangled_constraint(c)})")

    lines.append("(check-sat)")
    query = [_mangle(n) for n in unknowns] + [t for t, _ in option_names]
    if query:
        lines.append("(get-value (%s))" % " ".join(query))
    return "\n".join(lines) + "\n", unknowns, option_names


def _mangle(name: str) -> str:
    return "c_" + name.replace(".", "_").replace("#", "m")


def _mangled_constraint(c: ArithConstraint) -> str:
    entries = tuple((tuple(_mangle(n) for n in um), coeff) for um, coeff in c.upoly)
    return _constraint_sexpr(ArithConstraint(entries, c.bound, c.origin))


def _tokenize(text: str):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_sexprs(tokens: list[str]):
    out = []
    stack = [out]
    for tok in tokens:
        if tok == "(":
            new: list = []
            stack[-1].append(new)
            stack.append(new)
        elif tok == ")":
            if len(stack) == 1:
                raise SmtFormatError("unbalanced parentheses in solver output")
            stack.pop()
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SmtFormatError("unbalanced parentheses in solver output")
    return out


def _parse_int(expr) -> int:
    if isinstance(expr, str):
        return int(expr)
    if isinstance(expr, list) and len(expr) == 2 and expr[0] == "-":
        return -_parse_int(expr[1])
    raise SmtFormatError(f"expected an integer, got {expr!r}")


def parse_model(
    text: str, unknowns: list[str], option_names: list[tuple[str, tuple[int, int]]]
) -> tuple[dict[str, int], list[tuple[int, int]]]:
    """Values and selected (adp, branch) pairs from a get-value answer."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    body = "\n".join(lines[1:])  # after the sat line
    sexprs = _parse_sexprs(_tokenize(body))
    bindings: dict[str, object] = {}
    for group in sexprs:
        for pair in group:
            if isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], str):
                bindings[pair[0]] = pair[1]
    values = {}
    for name in unknowns:
        smt_name = _mangle(name)
        if smt_name not in bindings:
            raise SmtFormatError(f"missing value for {name}")
        values[name] = _parse_int(bindings[smt_name])
        if values[name] < 0:
            raise SmtFormatError(f"negative coefficient for {name}")
    strict = [key for t, key in option_names if bindings.get(t) == "true"]
    return values, strict


def try_external_solver(cs: "ConstraintSet", cfg: SmtConfig):
    """None = fall back internally; ({}, []) = definite unsat; else model."""
    script, unknowns, option_names = emit_script(cs)
    try:
        proc = subprocess.run(
            [cfg.solver_path],
            input=script,
            capture_output=True,
            text=True,
            timeout=cfg.timeout,
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    out = proc.stdout.strip()
    first = out.splitlines()[0].strip() if out else ""
    if first == "unsat":
        return {}, []
    if first != "sat":
        return None
    try:
        values, strict = parse_model(out, unknowns, option_names)
    except (SmtFormatError, ValueError) as exc:
        raise SmtFormatError(f"malformed solver output: {exc}") from exc
    if not strict:
        return None
    return values, strict
