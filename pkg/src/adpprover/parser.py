"""Parser for the probabilistic rewrite system input format.

Grammar (UTF-8, # comments to end of line):

    File   ::= (VarDecl | Rule)*
    VarDecl::= "(" "var" Ident* ")"
    Rule   ::= Term "->" "{" Branch ("," Branch)* "}" ";"
    Branch ::= Rational ":" Term
    Rational ::= Int | Int "/" Int
    Term   ::= Ident | Ident "(" Term ("," Term)* ")"

With explicit (var ...) declarations, exactly the declared identifiers
are variables.  Without declarations, an unapplied identifier is a
variable iff it occurs somewhere in its rule's left-hand side below the
root; anything applied or at a left-hand-side root is a symbol.  When a
bare right-hand-side identifier was meant as a constant, declare the real
variables explicitly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .ptrs import MultiDistribution, PTRS, ProbRule, infer_signature
from .terms import FRESH_PREFIX, App, Term, Var


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


_TOKEN = re.compile(
    r"""(?P<ws>\s+|\#[^\n]*)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
      | (?P<int>\d+)
      | (?P<arrow>->)
      | (?P<punct>[(){},;:/])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            out.append(_Tok(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    out.append(_Tok("eof", "", line, col))
    return out


@dataclass
class _RawTerm:
    head: str
    args: list["_RawTerm"]
    line: int
    column: int


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.column)
        return tok

    def parse_file(self) -> tuple[list[tuple[_RawTerm, list[tuple[Fraction, _RawTerm]]]], set[str], bool]:
        rules = []
        declared: set[str] = set()
        has_decl = False
        while self.peek().kind != "eof":
            if self.peek().text == "(":
                self.next()
                tok = self.next()
                if tok.text != "var":
                    raise ParseError("expected 'var' declaration", tok.line, tok.column)
                has_decl = True
                while self.peek().text != ")":
                    name = self.next()
                    if name.kind != "ident":
                        raise ParseError("expected a variable name", name.line, name.column)
                    declared.add(name.text)
                self.expect(")")
                continue
            rules.append(self.parse_rule())
        return rules, declared, has_decl

    def parse_rule(self):
        lhs = self.parse_term()
        self.expect("->")
        self.expect("{")
        branches = [self.parse_branch()]
        while self.peek().text == ",":
            self.next()
            branches.append(self.parse_branch())
        self.expect("}")
        self.expect(";")
        return lhs, branches

    def parse_branch(self) -> tuple[Fraction, _RawTerm]:
        p = self.parse_rational()
        self.expect(":")
        return p, self.parse_term()

    def parse_rational(self) -> Fraction:
        tok = self.next()
        if tok.kind != "int":
            raise ParseError(f"expected a probability, found {tok.text!r}", tok.line, tok.column)
        num = int(tok.text)
        if self.peek().text == "/":
            self.next()
            den = self.next()
            if den.kind != "int":
                raise ParseError("expected a denominator", den.line, den.column)
            if int(den.text) == 0:
                raise ParseError("zero denominator", den.line, den.column)
            return Fraction(num, int(den.text))
        return Fraction(num)

    def parse_term(self) -> _RawTerm:
        tok = self.next()
        if tok.kind not in ("ident", "int"):
            raise ParseError(f"expected a term, found {tok.text!r}", tok.line, tok.column)
        if tok.text.startswith(FRESH_PREFIX):
            raise ParseError(f"identifier {tok.text!r} uses the reserved prefix", tok.line, tok.column)
        args = []
        if tok.kind == "ident" and self.peek().text == "(":
            self.next()
            args.append(self.parse_term())
            while self.peek().text == ",":
                self.next()
                args.append(self.parse_term())
            self.expect(")")
        return _RawTerm(tok.text, args, tok.line, tok.column)


def _raw_idents(t: _RawTerm, out: set[str]):
    out.add(t.head)
    for a in t.args:
        _raw_idents(a, out)


def _applied_or_root(raw_rules) -> set[str]:
    symbols: set[str] = set()

    def scan(t: _RawTerm):
        if t.args:
            symbols.add(t.head)
        for a in t.args:
            scan(a)

    for lhs, branches in raw_rules:
        symbols.add(lhs.head)
        scan(lhs)
        for _, r in branches:
            scan(r)
    return symbols


def _lhs_idents(lhs: _RawTerm) -> set[str]:
    out: set[str] = set()
    for a in lhs.args:
        _raw_idents(a, out)
    return out


def _build(t: _RawTerm, vars_of_rule: set[str]) -> Term:
    if not t.args and t.head in vars_of_rule:
        return Var(t.head)
    if t.head in vars_of_rule:
        raise ParseError(f"variable {t.head} cannot take arguments", t.line, t.column)
    return App(t.head, tuple(_build(a, vars_of_rule) for a in t.args))


def parse_ptrs(text: str) -> PTRS:
    raw_rules, declared, has_decl = _Parser(text).parse_file()
    if not raw_rules:
        raise ParseError("no rules", 1, 1)
    applied = _applied_or_root(raw_rules)
    if has_decl:
        bad = declared & applied
        if bad:
            raise ParseError(f"declared variable {sorted(bad)[0]} is used as a symbol", 1, 1)

    rules = []
    for lhs, branches in raw_rules:
        if has_decl:
            rule_vars = set(declared)
        else:
            # unapplied identifiers below the lhs root are this rule's variables
            rule_vars = {
                x for x in _lhs_idents(lhs)
                if x not in applied and not x[0].isdigit()
            }
        if not lhs.args and lhs.head in rule_vars:
            raise ParseError("left-hand side is a variable", lhs.line, lhs.column)
        lhs_term = _build(lhs, rule_vars)
        entries = []
        total = Fraction(0)
        for p, r in branches:
            if not 0 < p <= 1:
                raise ParseError(f"probability {p} outside (0,1]", r.line, r.column)
            entries.append((p, _build(r, rule_vars)))
            total += p
        if total != 1:
            raise ParseError(f"probabilities sum to {total}", lhs.line, lhs.column)
        try:
            rules.append(ProbRule(lhs_term, MultiDistribution(tuple(entries))))
        except ValueError as exc:
            hint = "" if has_decl else " (declare variables explicitly with (var ...) if needed)"
            raise ParseError(str(exc) + hint, lhs.line, lhs.column) from None
    return PTRS(infer_signature(rules), tuple(rules))
