"""First-order terms with annotation marks on defined symbols.

Terms are immutable trees over a signature plus variables.  An occurrence
of a defined symbol may carry an annotation mark; the marked twin of a
defined symbol only materializes as a separate symbol when exporting to
the non-probabilistic dependency pair backend.  Annotations on lhs sides
of rules are always ignored by matching, so `match` flattens its subject
and `unify` treats (name, mark) pairs as the symbol.

Positions are 1-based tuples of child indices, the empty tuple being the
root.  Substitutions are plain dicts from variable names to terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

Position = tuple[int, ...]
ROOT: Position = ()


class PositionError(ValueError):
    """Raised when a position is not valid in the given term."""


class AnnotationError(ValueError):
    """Raised when an annotation is requested at an illegal position."""


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class App:
    sym: str
    args: tuple["Term", ...] = ()
    annotated: bool = False

    def __str__(self):
        head = self.sym + "#" if self.annotated else self.sym
        if not self.args:
            return head
        return "%s(%s)" % (head, ",".join(str(a) for a in self.args))


Term = Var | App
Substitution = dict[str, Term]


def app(sym: str, *args: Term) -> App:
    return App(sym, tuple(args))


@dataclass(frozen=True)
class Signature:
    """Function symbols with arities; the defined ones may carry marks."""

    arities: dict[str, int]
    defined: frozenset[str]

    def __post_init__(self):
        if not self.defined <= set(self.arities):
            raise ValueError("defined symbols must be part of the signature")
        if self.arities and not any(n == 0 for n in self.arities.values()):
            raise ValueError("signature needs at least one constant")

    @property
    def constructors(self) -> frozenset[str]:
        return frozenset(self.arities) - self.defined

    def well_formed(self, t: Term) -> bool:
        if isinstance(t, Var):
            return True
        if t.sym not in self.arities or self.arities[t.sym] != len(t.args):
            return False
        if t.annotated and t.sym not in self.defined:
            return False
        return all(self.well_formed(a) for a in t.args)


# ---------------------------------------------------------------------------
# positions and basic traversal


def subterms(t: Term) -> Iterator[tuple[Position, Term]]:
    """All (position, subterm) pairs in leftmost-outermost (pre-)order."""
    stack = [(ROOT, t)]
    while stack:
        pos, u = stack.pop()
        yield pos, u
        if isinstance(u, App):
            stack.extend(
                (pos + (i,), a) for i, a in reversed(list(enumerate(u.args, 1)))
            )


def positions(t: Term) -> Iterator[Position]:
    """All positions of t in leftmost-outermost (pre-)order."""
    for pos, _ in subterms(t):
        yield pos


def subterm_at(t: Term, p: Position) -> Term:
    for depth, i in enumerate(p):
        if not isinstance(t, App) or not 1 <= i <= len(t.args):
            raise PositionError(f"no subterm at prefix {'.'.join(map(str, p[: depth + 1])) or 'e'}")
        t = t.args[i - 1]
    return t


def replace_at(t: Term, p: Position, r: Term) -> Term:
    if not p:
        return r
    i = p[0]
    if not isinstance(t, App) or not 1 <= i <= len(t.args):
        raise PositionError(f"no subterm at prefix {p[0]}")
    try:
        new_arg = replace_at(t.args[i - 1], p[1:], r)
    except PositionError:
        raise PositionError(f"no subterm at prefix {'.'.join(map(str, p)) or 'e'}") from None
    args = t.args[:i - 1] + (new_arg,) + t.args[i:]
    return App(t.sym, args, t.annotated)


def variables(t: Term) -> set[str]:
    out: set[str] = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Var):
            out.add(u.name)
        else:
            stack.extend(u.args)
    return out


def var_positions(t: Term) -> list[tuple[Position, str]]:
    return [(p, u.name) for p, u in subterms(t) if isinstance(u, Var)]


def size(t: Term) -> int:
    return sum(1 for _ in positions(t))


# ---------------------------------------------------------------------------
# annotations


def flat(t: Term) -> Term:
    """Remove every annotation mark from t."""
    if isinstance(t, Var):
        return t
    args = tuple(flat(a) for a in t.args)
    if not t.annotated and args == t.args:
        return t
    return App(t.sym, args)


def is_flat(t: Term) -> bool:
    if isinstance(t, Var):
        return True
    return not t.annotated and all(is_flat(a) for a in t.args)


def anno(t: Term, phi: frozenset[Position] | set[Position], defined: frozenset[str]) -> Term:
    """Mark exactly the positions in phi, removing all other marks.

    Every position in phi must hold a defined symbol.
    """

    def go(u: Term, pos: Position) -> Term:
        if isinstance(u, Var):
            if pos in phi:
                raise AnnotationError(f"cannot annotate variable at {pos}")
            return u
        mark = pos in phi
        if mark and u.sym not in defined:
            raise AnnotationError(f"cannot annotate constructor {u.sym} at {pos}")
        return App(u.sym, tuple(go(a, pos + (i,)) for i, a in enumerate(u.args, 1)), mark)

    unknown = set(phi) - set(positions(t))
    if unknown:
        raise PositionError(f"no subterm at prefix {'.'.join(map(str, sorted(unknown)[0])) or 'e'}")
    return go(t, ROOT)


def anno_root(t: Term) -> Term:
    """Mark the root of t (t must have a defined root by convention)."""
    if isinstance(t, Var):
        raise AnnotationError("cannot annotate a variable")
    return App(t.sym, t.args, True)


def deanno_above(t: Term, pi: Position) -> Term:
    """Remove all marks strictly above position pi."""

    def go(u: Term, rest: Position) -> Term:
        if not rest or isinstance(u, Var):
            return u
        i = rest[0]
        args = u.args[:i - 1] + (go(u.args[i - 1], rest[1:]),) + u.args[i:]
        return App(u.sym, args)

    subterm_at(t, pi)  # validate
    return go(t, pi)


def annotated_positions(t: Term) -> list[Position]:
    return [p for p, u in subterms(t) if isinstance(u, App) and u.annotated]


def annotated_subterms(t: Term) -> list[tuple[Position, Term]]:
    """Flattened subterms of t with marked root, leftmost-outermost order."""
    return [(p, flat(u)) for p, u in subterms(t) if isinstance(u, App) and u.annotated]


def defined_positions(t: Term, defined: frozenset[str]) -> list[Position]:
    """Positions of defined-or-marked symbols (marked or not)."""
    return [
        p for p, u in subterms(t)
        if isinstance(u, App) and (u.annotated or u.sym in defined)
    ]


# ---------------------------------------------------------------------------
# substitutions, matching, unification


def substitute(t: Term, sigma: Substitution) -> Term:
    if isinstance(t, Var):
        return sigma.get(t.name, t)
    return App(t.sym, tuple(substitute(a, sigma) for a in t.args), t.annotated)


def compose(sigma: Substitution, tau: Substitution) -> Substitution:
    """The substitution mapping x to (x sigma) tau."""
    out = {x: substitute(t, tau) for x, t in sigma.items()}
    for x, t in tau.items():
        out.setdefault(x, t)
    return out


def match(pattern: Term, subject: Term) -> Optional[Substitution]:
    """Most general sigma with pattern sigma = flat(subject), if any.

    The pattern must be annotation-free; marks on the subject are ignored,
    so the range of the result is always flat.
    """
    sigma: Substitution = {}
    stack = [(pattern, subject)]
    while stack:
        p, s = stack.pop()
        if isinstance(p, Var):
            s = flat(s)
            bound = sigma.get(p.name)
            if bound is None:
                sigma[p.name] = s
            elif bound != s:
                return None
        elif isinstance(s, Var):
            return None
        elif p.sym != s.sym or len(p.args) != len(s.args):
            return None
        else:
            stack.extend(zip(p.args, s.args))
    return sigma


def _occurs(name: str, t: Term, sigma: Substitution) -> bool:
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Var):
            if u.name == name:
                return True
            if u.name in sigma:
                stack.append(sigma[u.name])
        else:
            stack.extend(u.args)
    return False


def unify(s: Term, t: Term) -> Optional[Substitution]:
    """Idempotent mgu of s and t with occurs check, or None.

    Marked and unmarked occurrences of a symbol are distinct heads, so
    callers can unify two #-lifted terms directly.
    """
    sigma: Substitution = {}

    def resolve(u: Term) -> Term:
        while isinstance(u, Var) and u.name in sigma:
            u = sigma[u.name]
        return u

    stack = [(s, t)]
    while stack:
        a, b = stack.pop()
        a, b = resolve(a), resolve(b)
        if a == b:
            continue
        if isinstance(a, Var):
            if _occurs(a.name, b, sigma):
                return None
            sigma[a.name] = b
        elif isinstance(b, Var):
            if _occurs(b.name, a, sigma):
                return None
            sigma[b.name] = a
        elif a.sym == b.sym and a.annotated == b.annotated and len(a.args) == len(b.args):
            stack.extend(zip(a.args, b.args))
        else:
            return None

    # resolve bindings to make the result idempotent; terminates because
    # the occurs check keeps the binding relation acyclic
    current = dict(sigma)
    changed = True
    while changed:
        changed = False
        for x, u in current.items():
            v = substitute(u, current)
            if v != u:
                current[x] = v
                changed = True
    return current


def is_renaming(sigma: Substitution) -> bool:
    rng = list(sigma.values())
    return all(isinstance(t, Var) for t in rng) and len({t.name for t in rng if isinstance(t, Var)}) == len(rng)


def more_general(delta: Substitution, rho: Substitution, names: set[str]) -> bool:
    """Whether some rho' satisfies x delta rho' = x rho for all x in names."""
    names = set(names) | set(delta) | set(rho)
    xs = sorted(names)
    pattern = App("*tuple*", tuple(substitute(Var(x), delta) for x in xs))
    subject = App("*tuple*", tuple(substitute(Var(x), rho) for x in xs))
    return match(pattern, subject) is not None


# ---------------------------------------------------------------------------
# fresh variables and abstraction operators

FRESH_PREFIX = "_v"


class FreshVars:
    """Call-local fresh name source; parser rejects the reserved prefix."""

    def __init__(self):
        self.counter = 0

    def next(self) -> Var:
        v = Var(f"{FRESH_PREFIX}{self.counter}")
        self.counter += 1
        return v


def cap(t: Term, abstractable_roots: frozenset[str] | set[str]) -> Term:
    """Replace every outermost subterm rooted in abstractable_roots by a
    fresh variable; multiple occurrences of equal subterms get distinct
    variables."""
    fresh = FreshVars()

    def go(u: Term) -> Term:
        if isinstance(u, Var):
            return u
        if u.sym in abstractable_roots and not u.annotated:
            return fresh.next()
        return App(u.sym, tuple(go(a) for a in u.args), u.annotated)

    return go(t)


def ren(t: Term) -> Term:
    """Replace every variable occurrence by a fresh variable."""
    fresh = FreshVars()

    def go(u: Term) -> Term:
        if isinstance(u, Var):
            return fresh.next()
        return App(u.sym, tuple(go(a) for a in u.args), u.annotated)

    return go(t)


def cap_inverse(t: Term, rhs_roots: frozenset[str] | set[str], collapsing: bool) -> Term:
    """Abstract subterms rooted in right-hand-side roots; a collapsing
    problem abstracts everything to one fresh variable."""
    fresh = FreshVars()
    if collapsing:
        return fresh.next()

    def go(u: Term, root: bool) -> Term:
        if isinstance(u, Var):
            return u
        if not root and u.sym in rhs_roots and not u.annotated:
            return fresh.next()
        return App(u.sym, tuple(go(a, False) for a in u.args), u.annotated)

    return go(t, True)


def rename_apart(t: Term, taken: set[str], hint: str = "") -> tuple[Term, Substitution]:
    """Rename the variables of t away from taken; returns term and renaming."""
    sigma: Substitution = {}
    for name in sorted(variables(t)):
        base = name + hint
        candidate, k = base, 0
        while candidate in taken:
            candidate = f"{base}_{k}"
            k += 1
        taken.add(candidate)
        sigma[name] = Var(candidate)
    return substitute(t, sigma), sigma


def canonical_form(t: Term) -> Term:
    """Variables renamed by first occurrence; used for alpha-equality."""
    order: dict[str, str] = {}

    def go(u: Term) -> Term:
        if isinstance(u, Var):
            if u.name not in order:
                order[u.name] = f"{FRESH_PREFIX}c{len(order)}"
            return Var(order[u.name])
        return App(u.sym, tuple(go(a) for a in u.args), u.annotated)

    return go(t)
