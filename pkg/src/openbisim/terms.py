"""Message terms, substitutions, convergent rewriting, and equational
unification for pluggable finitary theories.

Terms are built from one global namespace of identifiers: a name is simply a
variable that some binder owns.  A Theory packages a signature, an ordered
convergent rule list, and the narrowing depth used for E-unification.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from . import kernel

__all__ = [
    "Term", "Var", "App", "Substitution", "RewriteRule", "Theory",
    "UnifierSet", "Entailment", "UnknownSymbol", "NonTermination",
    "TheoryError", "normalize", "eq_mod", "unify_mod", "fresh_for",
    "entails_neq", "free_vars", "subterms", "term_size", "parse_term",
    "render_term", "load_theory", "parse_theory", "dy_asym", "dy_blind",
]


# ---------------------------------------------------------------------------
# Terms


class Term:
    __slots__ = ()


@dataclass(frozen=True, repr=False)
class Var(Term):
    __slots__ = ("name", "_hash", "_fv")
    name: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(("v", self.name)))
        object.__setattr__(self, "_fv", frozenset((self.name,)))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return type(other) is Var and other.name == self.name

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True, repr=False)
class App(Term):
    __slots__ = ("fn", "args", "_hash", "_fv")
    fn: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "_hash", hash(("a", self.fn, self.args)))
        object.__setattr__(self, "_fv", None)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return (
            type(other) is App
            and other._hash == self._hash
            and other.fn == self.fn
            and other.args == self.args
        )

    def __repr__(self) -> str:
        return render_term(self)


def app(fn: str, *args: Term) -> App:
    return App(fn, tuple(args))


def free_vars(t: Term) -> frozenset[str]:
    cached = t._fv  # type: ignore[union-attr]
    if cached is not None:
        return cached
    out: frozenset[str] = frozenset()
    for a in t.args:  # type: ignore[union-attr]
        out |= free_vars(a)
    object.__setattr__(t, "_fv", out)
    return out


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def term_size(t: Term) -> int:
    if isinstance(t, Var):
        return 1
    return 1 + sum(term_size(a) for a in t.args)


def render_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if not t.args:
        return t.fn
    return f"{t.fn}({', '.join(render_term(a) for a in t.args)})"


def _encode(t: Term):
    if isinstance(t, Var):
        return t.name
    return (t.fn,) + tuple(_encode(a) for a in t.args)


def _decode(e) -> Term:
    if isinstance(e, str):
        return Var(e)
    return App(e[0], tuple(_decode(x) for x in e[1:]))


# ---------------------------------------------------------------------------
# Substitutions


@dataclass(frozen=True, repr=False)
class Substitution:
    """Finite map from variables to terms, applied simultaneously.

    Bindings are kept sorted so rendering is canonical.  Most substitutions
    in this tool (frames, unifiers, world refinements) are additionally
    idempotent; that invariant is checked where required via is_idempotent().
    """

    __slots__ = ("bindings", "_map", "_hash")
    bindings: tuple[tuple[str, Term], ...]

    def __post_init__(self) -> None:
        kept = [(x, t) for x, t in self.bindings
                if not (isinstance(t, Var) and t.name == x)]
        names = [x for x, _ in kept]
        if len(set(names)) == len(names):
            items = tuple(sorted(kept, key=lambda b: b[0]))
        else:
            items = tuple(sorted(kept, key=lambda b: (b[0], render_term(b[1]))))
        object.__setattr__(self, "bindings", items)
        object.__setattr__(self, "_map", dict(items))
        object.__setattr__(self, "_hash", hash(items))

    def is_idempotent(self) -> bool:
        dom = self._map.keys()
        return not any(dom & free_vars(t) for _, t in self.bindings)

    @staticmethod
    def of(mapping: Mapping[str, Term] | Iterable[tuple[str, Term]]) -> "Substitution":
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        return Substitution(tuple(items))

    @staticmethod
    def identity() -> "Substitution":
        return _IDENTITY

    @property
    def domain(self) -> frozenset[str]:
        return frozenset(self._map)

    def range_vars(self) -> frozenset[str]:
        out: set[str] = set()
        for _, t in self.bindings:
            out |= free_vars(t)
        return frozenset(out)

    def get(self, x: str) -> Optional[Term]:
        return self._map.get(x)

    def __call__(self, t: Term) -> Term:
        if not self.bindings:
            return t
        if isinstance(t, Var):
            return self._map.get(t.name, t)
        if not (free_vars(t) & self._map.keys()):
            return t
        return App(t.fn, tuple(self(a) for a in t.args))

    def compose(self, other: "Substitution") -> "Substitution":
        """Return s such that t(s) == (t(self))(other) for all terms t."""
        out: dict[str, Term] = {}
        for x, t in self.bindings:
            out[x] = other(t)
        for x, t in other.bindings:
            if x not in out:
                out[x] = t
        return Substitution.of({x: t for x, t in out.items() if Var(x) != t})

    def restrict(self, keep: Iterable[str]) -> "Substitution":
        keep = set(keep)
        return Substitution(tuple((x, t) for x, t in self.bindings if x in keep))

    def rename(self, mapping: Mapping[str, str]) -> "Substitution":
        ren = Substitution.of({x: Var(y) for x, y in mapping.items()})
        return Substitution(
            tuple((mapping.get(x, x), ren(t)) for x, t in self.bindings)
        )

    def is_identity(self) -> bool:
        return not self.bindings

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Substitution) and other.bindings == self.bindings

    def __repr__(self) -> str:
        inner = ", ".join(f"{x} -> {render_term(t)}" for x, t in self.bindings)
        return "{" + inner + "}"


_IDENTITY = Substitution(())


# ---------------------------------------------------------------------------
# Theories


class TheoryError(Exception):
    pass


class UnknownSymbol(TheoryError):
    pass


class NonTermination(TheoryError):
    """Rewrite steps exceeded the configured ceiling (broken user theory)."""


@dataclass(frozen=True)
class RewriteRule:
    lhs: App
    rhs: Term

    def __post_init__(self) -> None:
        if not isinstance(self.lhs, App):
            raise TheoryError("rule left side must be an application")
        if not free_vars(self.rhs) <= free_vars(self.lhs):
            raise TheoryError(
                f"rule right side has variables outside the left side: "
                f"{render_term(self.lhs)} -> {render_term(self.rhs)}"
            )

    def variables(self) -> frozenset[str]:
        return free_vars(self.lhs)

    def __repr__(self) -> str:
        return f"{render_term(self.lhs)} -> {render_term(self.rhs)}"


def _is_subterm_rule(rule: RewriteRule) -> bool:
    return any(s == rule.rhs for s in subterms(rule.lhs)) or (
        isinstance(rule.rhs, App) and not rule.rhs.args
    )


def _is_size_decreasing(rule: RewriteRule) -> bool:
    return term_size(rule.rhs) < term_size(rule.lhs)


@dataclass(frozen=True)
class Theory:
    """Signature (symbol -> arity), ordered convergent rules, narrowing bound."""

    name: str
    signature: Mapping[str, int]
    rules: tuple[RewriteRule, ...]
    unification_bound: int = 6
    rewrite_ceiling: int = 10_000
    saturation_complete: Optional[bool] = None

    _encoded: tuple = field(default=(), compare=False, repr=False)
    _nf_cache: dict = field(default_factory=dict, compare=False, repr=False)
    _unify_cache: dict = field(default_factory=dict, compare=False, repr=False)
    _aux: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "signature", dict(self.signature))
        object.__setattr__(self, "rules", tuple(self.rules))
        for rule in self.rules:
            for s in itertools.chain(subterms(rule.lhs), subterms(rule.rhs)):
                if isinstance(s, App):
                    self._check_symbol(s)
        object.__setattr__(
            self,
            "_encoded",
            tuple(
                (_encode(r.lhs), _encode(r.rhs), frozenset(r.variables()))
                for r in self.rules
            ),
        )
        if self.saturation_complete is None:
            object.__setattr__(
                self, "saturation_complete",
                all(_is_subterm_rule(r) for r in self.rules),
            )

    # termination metadata: decreasing-size check over the bundled theories
    @property
    def size_decreasing(self) -> bool:
        return all(_is_size_decreasing(r) for r in self.rules)

    @property
    def subterm_convergent(self) -> bool:
        return all(_is_subterm_rule(r) for r in self.rules)

    def _check_symbol(self, t: App) -> None:
        arity = self.signature.get(t.fn)
        if arity is None:
            raise UnknownSymbol(f"undeclared symbol {t.fn!r} in theory {self.name}")
        if arity != len(t.args):
            raise UnknownSymbol(
                f"symbol {t.fn!r} used with {len(t.args)} arguments, declared /{arity}"
            )

    def check_term(self, t: Term) -> None:
        for s in subterms(t):
            if isinstance(s, App):
                self._check_symbol(s)

    def symbols(self) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(self.signature.items()))

    def parse(self, text: str) -> Term:
        """Parse a term, reading declared nullary symbols as constants."""
        return _promote_constants(parse_term(text), self.signature)

    def __hash__(self) -> int:
        return hash((self.name, tuple(self.signature.items()), self.rules))


# ---------------------------------------------------------------------------
# Rewriting


def normalize(t: Term, th: Theory) -> Term:
    """Unique normal form of `t` under exhaustive innermost rewriting."""
    cached = th._nf_cache.get(t)
    if cached is not None:
        return cached
    th.check_term(t)
    try:
        nf = _decode(kernel.normalize(_encode(t), th._encoded, th.rewrite_ceiling))
    except kernel.RewriteLimit:
        raise NonTermination(
            f"rewriting of {render_term(t)} exceeded {th.rewrite_ceiling} steps "
            f"in theory {th.name}"
        ) from None
    th._nf_cache[t] = nf
    th._nf_cache[nf] = nf
    return nf


def eq_mod(s: Term, t: Term, th: Theory) -> bool:
    """Equality modulo the theory: identical normal forms."""
    return s == t or normalize(s, th) == normalize(t, th)


# ---------------------------------------------------------------------------
# Syntactic unification


def syntactic_unify(pairs: Sequence[tuple[Term, Term]]) -> Optional[Substitution]:
    """Most general syntactic unifier of the pairs, or None."""
    for a, b in pairs:
        if isinstance(a, App) and isinstance(b, App) and (
            a.fn != b.fn or len(a.args) != len(b.args)
        ):
            return None
    solved: dict[str, Term] = {}

    def resolve(t: Term) -> Term:
        while isinstance(t, Var) and t.name in solved:
            t = solved[t.name]
        return t

    def full(t: Term) -> Term:
        t = resolve(t)
        if isinstance(t, Var):
            return t
        return App(t.fn, tuple(full(a) for a in t.args))

    def occurs(x: str, t: Term) -> bool:
        t = resolve(t)
        if isinstance(t, Var):
            return t.name == x
        return any(occurs(x, a) for a in t.args)

    work = list(pairs)
    while work:
        a, b = work.pop()
        a, b = resolve(a), resolve(b)
        if a == b:
            continue
        if isinstance(a, Var):
            if occurs(a.name, b):
                return None
            solved[a.name] = b
        elif isinstance(b, Var):
            if occurs(b.name, a):
                return None
            solved[b.name] = a
        else:
            if a.fn != b.fn or len(a.args) != len(b.args):
                return None
            work.extend(zip(a.args, b.args))
    return Substitution.of({x: full(t) for x, t in solved.items()})


def apply_map(t: Term, mapping: Mapping[str, Term]) -> Term:
    """Simultaneous (non-composing) substitution; needs no idempotence."""
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    return App(t.fn, tuple(apply_map(a, mapping) for a in t.args))


def match_term(pattern: Term, t: Term, pattern_vars: frozenset[str]) -> Optional[dict[str, Term]]:
    """One-way matching: bindings b over pattern_vars with pattern[b] == t."""
    bindings: dict[str, Term] = {}

    def go(p: Term, u: Term) -> bool:
        if isinstance(p, Var):
            if p.name in pattern_vars:
                if p.name in bindings:
                    return bindings[p.name] == u
                bindings[p.name] = u
                return True
            return p == u
        if isinstance(u, Var) or p.fn != u.fn or len(p.args) != len(u.args):
            return False
        return all(go(a, b) for a, b in zip(p.args, u.args))

    if go(pattern, t):
        return bindings
    return None


# ---------------------------------------------------------------------------
# E-unification by narrowing

NARROW_PREFIX = "?"
_narrow_re = re.compile(r"^\?\d+$")


def is_narrowing_var(name: str) -> bool:
    return bool(_narrow_re.match(name))


@dataclass(frozen=True)
class UnifierSet:
    """Complete-up-to-bound set of E-unifiers.

    `truncated` means the narrowing search hit the depth bound while steps
    remained; downstream consumers must treat "empty but truncated" as
    UNKNOWN, not as disequality.
    """

    substitutions: tuple[Substitution, ...]
    truncated: bool = False

    def __iter__(self) -> Iterator[Substitution]:
        return iter(self.substitutions)

    def __bool__(self) -> bool:
        return bool(self.substitutions)


def _rename_rule(rule: RewriteRule, counter: Iterator[int]) -> tuple[App, Term]:
    ren = {x: Var(f"?r{next(counter)}") for x in sorted(rule.variables())}
    sub = Substitution.of(ren)
    return sub(rule.lhs), sub(rule.rhs)  # type: ignore[return-value]


def _nonvar_positions(t: Term, pos: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], App]]:
    if isinstance(t, App):
        yield pos, t
        for i, a in enumerate(t.args):
            yield from _nonvar_positions(a, pos + (i,))


def _replace(t: Term, pos: tuple[int, ...], new: Term) -> Term:
    if not pos:
        return new
    assert isinstance(t, App)
    i = pos[0]
    args = list(t.args)
    args[i] = _replace(args[i], pos[1:], new)
    return App(t.fn, tuple(args))


def _canonical_unifier(sub: Substitution, keep: frozenset[str], th: Theory) -> Substitution:
    """Restrict to `keep`, normalize ranges, rename narrowing vars positionally."""
    sub = Substitution.of(
        {x: normalize(t, th) for x, t in sub.restrict(keep).bindings}
    )
    fresh_vars = sorted(
        v for v in sub.range_vars() if v.startswith(NARROW_PREFIX)
    )
    ren = {v: f"?{i}" for i, v in enumerate(fresh_vars)}
    return sub.rename(ren)


def _subsumes(general: Substitution, specific: Substitution, keep: frozenset[str]) -> bool:
    """True if `specific` is an instance of `general` over the kept variables."""
    kept = sorted(keep)
    pattern = App("⊤", tuple(general(Var(x)) for x in kept))
    instance = App("⊤", tuple(specific(Var(x)) for x in kept))
    pattern_vars = free_vars(pattern)
    return match_term(pattern, instance, pattern_vars) is not None


def unify_mod(s: Term, t: Term, th: Theory) -> UnifierSet:
    """E-unifiers via syntactic unification interleaved with narrowing.

    Complete up to th.unification_bound narrowing steps for convergent rules;
    each returned substitution is idempotent, restricted to fv(s) U fv(t),
    and sound: eq_mod(s sigma, t sigma).  Deterministic order: lexicographic
    on (domain variable, rendered range term) tuples.
    """
    key = (s, t)
    cached = th._unify_cache.get(key)
    if cached is not None:
        return cached

    keep = free_vars(s) | free_vars(t)
    counter = itertools.count()
    found: dict[Substitution, None] = {}
    truncated = False

    def solve(a: Term, b: Term, acc: Substitution, depth: int) -> None:
        nonlocal truncated
        a, b = normalize(a, th), normalize(b, th)
        mgu = syntactic_unify([(a, b)])
        if mgu is not None:
            sol = _canonical_unifier(acc.compose(mgu), keep, th)
            if sol.is_idempotent() and _sound(sol):
                found.setdefault(sol)
        steps = []
        for side, term, other in (("l", a, b), ("r", b, a)):
            for pos, sub in _nonvar_positions(term):
                for rule in th.rules:
                    lhs, rhs = _rename_rule(rule, counter)
                    theta = syntactic_unify([(sub, lhs)])
                    if theta is None:
                        continue
                    steps.append((side, pos, theta, rhs, term, other))
        if not steps:
            return
        if depth <= 0:
            truncated = True
            return
        for side, pos, theta, rhs, term, other in steps:
            narrowed = theta(_replace(term, pos, rhs))
            rest = theta(other)
            nxt = acc.compose(theta)
            if side == "l":
                solve(narrowed, rest, nxt, depth - 1)
            else:
                solve(rest, narrowed, nxt, depth - 1)

    def _sound(sol: Substitution) -> bool:
        return eq_mod(sol(s), sol(t), th)

    solve(s, t, Substitution.identity(), th.unification_bound)

    by_size = sorted(
        found,
        key=lambda sub: (
            sum(term_size(r) for _, r in sub.bindings),
            tuple((x, render_term(r)) for x, r in sub.bindings),
        ),
    )
    minimal: list[Substitution] = []
    for sub in by_size:
        if not any(_subsumes(m, sub, keep) for m in minimal):
            minimal.append(sub)
    ordered = sorted(
        minimal,
        key=lambda sub: tuple((x, render_term(r)) for x, r in sub.bindings),
    )
    result = UnifierSet(tuple(ordered), truncated)
    th._unify_cache[key] = result
    return result


# ---------------------------------------------------------------------------
# Freshness and entailment


class Entailment(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNKNOWN = "unknown"


def fresh_for(sub: Substitution, names: Iterable[str]) -> bool:
    """dom(sub) avoids `names` and no range term mentions a name in `names`."""
    names = frozenset(names)
    if sub.domain & names:
        return False
    return not any(free_vars(t) & names for _, t in sub.bindings)


def entails_neq(names: Iterable[str], s: Term, t: Term, th: Theory) -> Entailment:
    """Decide `names |= s != t`: no substitution fresh for `names` may ever
    equate s and t modulo the theory."""
    names = frozenset(names)
    unifiers = unify_mod(s, t, th)
    for sub in unifiers:
        if fresh_for(sub, names):
            return Entailment.FAILS
    if unifiers.truncated:
        return Entailment.UNKNOWN
    return Entailment.HOLDS


# ---------------------------------------------------------------------------
# Term parsing (shared by the process/formula/theory grammars)

_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_'#]*|\(|\)|,)")


def parse_term(text: str) -> Term:
    term, rest = _parse_term_prefix(text)
    if rest.strip():
        raise TheoryError(f"trailing input after term: {rest.strip()!r}")
    return term


def _parse_term_prefix(text: str) -> tuple[Term, str]:
    m = _TOKEN.match(text)
    if not m or m.group(1) in ("(", ")", ","):
        raise TheoryError(f"expected identifier at {text.strip()[:30]!r}")
    head = m.group(1)
    rest = text[m.end():]
    if rest.lstrip().startswith("("):
        rest = rest.lstrip()[1:]
        args: list[Term] = []
        while True:
            if not args and rest.lstrip().startswith(")"):
                rest = rest.lstrip()[1:]
                break
            arg, rest = _parse_term_prefix(rest)
            args.append(arg)
            nxt = rest.lstrip()
            if nxt.startswith(","):
                rest = nxt[1:]
                continue
            if nxt.startswith(")"):
                rest = nxt[1:]
                break
            raise TheoryError(f"expected ',' or ')' at {nxt[:30]!r}")
        return App(head, tuple(args)), rest
    return Var(head), rest


# ---------------------------------------------------------------------------
# Theory files

_SYM_RE = re.compile(r"^sym\s+([A-Za-z_][A-Za-z0-9_']*)\s*/\s*(\d+)\s*$")
_RULE_RE = re.compile(r"^rule\s+(.*?)\s*->\s*(.*?)\s*$")
_META_RE = re.compile(r"^meta\s+([a-z_]+)\s*=\s*(\S+)\s*$")


def parse_theory(text: str, name: str = "user") -> Theory:
    """Line-oriented theory format:

        # comment
        sym <name>/<arity>
        rule <lhs> -> <rhs>         (terms in prefix form f(a,b))
        meta unification_bound = 6  (optional overrides)
    """
    signature: dict[str, int] = {}
    rules: list[RewriteRule] = []
    meta: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _SYM_RE.match(line):
            signature[m.group(1)] = int(m.group(2))
            continue
        if m := _RULE_RE.match(line):
            try:
                lhs = parse_term(m.group(1))
                rhs = parse_term(m.group(2))
            except TheoryError as exc:
                raise TheoryError(f"line {lineno}: {exc}") from None
            # identifiers that are declared nullary symbols are constants
            lhs = _promote_constants(lhs, signature)
            rhs = _promote_constants(rhs, signature)
            if not isinstance(lhs, App):
                raise TheoryError(f"line {lineno}: rule left side must be an application")
            rules.append(RewriteRule(lhs, rhs))
            continue
        if m := _META_RE.match(line):
            meta[m.group(1)] = m.group(2)
            continue
        raise TheoryError(f"line {lineno}: cannot parse {line!r}")
    kwargs = {}
    if "unification_bound" in meta:
        kwargs["unification_bound"] = int(meta["unification_bound"])
    if "rewrite_ceiling" in meta:
        kwargs["rewrite_ceiling"] = int(meta["rewrite_ceiling"])
    if "saturation_complete" in meta:
        kwargs["saturation_complete"] = meta["saturation_complete"] in ("true", "1", "yes")
    return Theory(name=name, signature=signature, rules=tuple(rules), **kwargs)


def _promote_constants(t: Term, signature: Mapping[str, int]) -> Term:
    if isinstance(t, Var):
        if signature.get(t.name) == 0:
            return App(t.name, ())
        return t
    return App(t.fn, tuple(_promote_constants(a, signature) for a in t.args))


def load_theory(path: str) -> Theory:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return parse_theory(text, name=name)


# ---------------------------------------------------------------------------
# Bundled theories

_DY_ASYM_TEXT = """
# Asymmetric encryption, hashing, pairing.
sym pk/1
sym hash/1
sym pair/2
sym aenc/2
sym adec/2
sym fst/1
sym snd/1
rule adec(aenc(M, pk(K)), K) -> M
rule aenc(adec(M, K), pk(K)) -> M
rule fst(pair(M, N)) -> M
rule snd(pair(M, N)) -> N
"""

_DY_BLIND_TEXT = _DY_ASYM_TEXT + """
# Blind signatures on top of the asymmetric base.
sym sign/2
sym blind/2
sym unblind/2
rule unblind(sign(blind(M, N), K), N) -> sign(M, K)
meta saturation_complete = true
"""


def dy_asym() -> Theory:
    return parse_theory(_DY_ASYM_TEXT, name="dy-asym")


def dy_blind() -> Theory:
    return parse_theory(_DY_BLIND_TEXT, name="dy-blind")


THEORY_SOURCES = {"dy-asym": _DY_ASYM_TEXT, "dy-blind": _DY_BLIND_TEXT}
