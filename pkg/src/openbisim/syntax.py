"""Process and extended-process ASTs, the concrete textual language, parser,
pretty-printer, alpha-canonicalization, and normal-form composition.

Concrete syntax (keywords, no Unicode):

    0                      deadlock
    out(C, M). P           send M on channel C
    in(C, x). P            receive on channel C, binding x
    tau. P                 silent prefix
    [s = t] P              match guard
    [s != t] P             mismatch guard
    new x, y. P            name restriction
    P | Q                  parallel ('|' binds loosest)
    P + Q                  choice
    rep P                  replication
    if s = t then P else Q sugar for [s = t] P + [s != t] Q

Extended processes:  new x. new y. { u = M, v = N } | P
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .terms import (
    App, Substitution, Term, Theory, Var, free_vars as term_free_vars,
    normalize, render_term,
)

__all__ = [
    "Process", "Deadlock", "Send", "Receive", "Match", "Mismatch", "New",
    "Parallel", "Choice", "Replicate", "TauPrefix", "ExtendedProcess",
    "ParseError", "parse", "parse_process", "pretty", "free_vars",
    "alpha_canonicalize", "substitute", "alpha_equiv", "guard_pairs",
    "make_extended", "compose_parallel", "DomainClash", "is_pi_fragment",
    "has_replication", "canonical_render", "unfold_replication",
]


# ---------------------------------------------------------------------------
# AST


class Process:
    __slots__ = ()


def _mk(cls):
    return dataclass(frozen=True, repr=False, eq=False)(cls)


@_mk
class Deadlock(Process):
    __slots__ = ("_hash",)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash("0"))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return type(other) is Deadlock

    def __repr__(self):
        return "0"


@_mk
class Send(Process):
    __slots__ = ("channel", "payload", "continuation", "_hash")
    channel: Term
    payload: Term
    continuation: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("out", self.channel, self.payload, self.continuation)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is Send and other._hash == self._hash
            and other.channel == self.channel and other.payload == self.payload
            and other.continuation == self.continuation
        )

    def __repr__(self):
        return pretty(self)


@_mk
class Receive(Process):
    __slots__ = ("channel", "binder", "continuation", "_hash")
    channel: Term
    binder: str
    continuation: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("in", self.channel, self.binder, self.continuation)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is Receive and other._hash == self._hash
            and other.channel == self.channel and other.binder == self.binder
            and other.continuation == self.continuation
        )

    def __repr__(self):
        return pretty(self)


@_mk
class Match(Process):
    __slots__ = ("left", "right", "continuation", "_hash")
    left: Term
    right: Term
    continuation: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("mat", self.left, self.right, self.continuation)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is Match and other._hash == self._hash
            and other.left == self.left and other.right == self.right
            and other.continuation == self.continuation
        )

    def __repr__(self):
        return pretty(self)


@_mk
class Mismatch(Process):
    __slots__ = ("left", "right", "continuation", "_hash")
    left: Term
    right: Term
    continuation: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("mis", self.left, self.right, self.continuation)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is Mismatch and other._hash == self._hash
            and other.left == self.left and other.right == self.right
            and other.continuation == self.continuation
        )

    def __repr__(self):
        return pretty(self)


@_mk
class New(Process):
    __slots__ = ("binder", "continuation", "_hash")
    binder: str
    continuation: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("new", self.binder, self.continuation)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is New and other._hash == self._hash
            and other.binder == self.binder and other.continuation == self.continuation
        )

    def __repr__(self):
        return pretty(self)


@_mk
class Parallel(Process):
    __slots__ = ("left", "right", "_hash")
    left: Process
    right: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("par", self.left, self.right)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is Parallel and other._hash == self._hash
            and other.left == self.left and other.right == self.right
        )

    def __repr__(self):
        return pretty(self)


@_mk
class Choice(Process):
    __slots__ = ("left", "right", "_hash")
    left: Process
    right: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("sum", self.left, self.right)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            type(other) is Choice and other._hash == self._hash
            and other.left == self.left and other.right == self.right
        )

    def __repr__(self):
        return pretty(self)


@_mk
class Replicate(Process):
    __slots__ = ("body", "_hash")
    body: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("rep", self.body)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return type(other) is Replicate and other.body == self.body

    def __repr__(self):
        return pretty(self)


@_mk
class TauPrefix(Process):
    __slots__ = ("continuation", "_hash")
    continuation: Process

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("tau", self.continuation)))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return type(other) is TauPrefix and other.continuation == self.continuation

    def __repr__(self):
        return pretty(self)


def if_then_else(s: Term, t: Term, then_p: Process, else_p: Process) -> Choice:
    """if s = t then P else Q  desugars to  [s = t] P + [s != t] Q."""
    return Choice(Match(s, t, then_p), Mismatch(s, t, else_p))


# ---------------------------------------------------------------------------
# Free variables, substitution, alpha handling


def free_vars(p: Process) -> frozenset[str]:
    if isinstance(p, Deadlock):
        return frozenset()
    if isinstance(p, Send):
        return term_free_vars(p.channel) | term_free_vars(p.payload) | free_vars(p.continuation)
    if isinstance(p, Receive):
        return term_free_vars(p.channel) | (free_vars(p.continuation) - {p.binder})
    if isinstance(p, (Match, Mismatch)):
        return term_free_vars(p.left) | term_free_vars(p.right) | free_vars(p.continuation)
    if isinstance(p, New):
        return free_vars(p.continuation) - {p.binder}
    if isinstance(p, (Parallel, Choice)):
        return free_vars(p.left) | free_vars(p.right)
    if isinstance(p, Replicate):
        return free_vars(p.body)
    if isinstance(p, TauPrefix):
        return free_vars(p.continuation)
    raise TypeError(p)


def bound_names(p: Process) -> frozenset[str]:
    if isinstance(p, Deadlock):
        return frozenset()
    if isinstance(p, Send):
        return bound_names(p.continuation)
    if isinstance(p, Receive):
        return bound_names(p.continuation) | {p.binder}
    if isinstance(p, (Match, Mismatch, TauPrefix)):
        return bound_names(p.continuation)
    if isinstance(p, New):
        return bound_names(p.continuation) | {p.binder}
    if isinstance(p, (Parallel, Choice)):
        return bound_names(p.left) | bound_names(p.right)
    if isinstance(p, Replicate):
        return bound_names(p.body)
    raise TypeError(p)


def _fresh_avoiding(base: str, avoid: set[str]) -> str:
    base = base.split("#", 1)[0] or "x"
    if base not in avoid:
        return base
    i = 1
    while f"{base}#{i}" in avoid:
        i += 1
    return f"{base}#{i}"


def substitute(p: Process, sub: Substitution, avoid: frozenset[str] = frozenset()) -> Process:
    """Capture-avoiding substitution; binders clashing with the substitution's
    range (or `avoid`) are renamed, e.g. the bound name x becomes x#1."""
    if sub.is_identity() and not avoid:
        return p
    taboo = set(sub.range_vars()) | set(sub.domain) | set(avoid)

    def go(q: Process, s: Substitution) -> Process:
        if isinstance(q, Deadlock):
            return q
        if isinstance(q, Send):
            return Send(s(q.channel), s(q.payload), go(q.continuation, s))
        if isinstance(q, (Match, Mismatch)):
            cls = type(q)
            return cls(s(q.left), s(q.right), go(q.continuation, s))
        if isinstance(q, TauPrefix):
            return TauPrefix(go(q.continuation, s))
        if isinstance(q, (Parallel, Choice)):
            cls = type(q)
            return cls(go(q.left, s), go(q.right, s))
        if isinstance(q, Replicate):
            return Replicate(go(q.body, s))
        if isinstance(q, (Receive, New)):
            binder = q.binder
            inner = Substitution(tuple(b for b in s.bindings if b[0] != binder))
            if binder in taboo or binder in inner.range_vars():
                used = set(taboo) | free_vars(q) | bound_names(q)
                new_binder = _fresh_avoiding(binder, used)
                taboo.add(new_binder)
                ren = Substitution.of({binder: Var(new_binder)})
                if isinstance(q, Receive):
                    return Receive(
                        s(q.channel), new_binder, go(go(q.continuation, ren), inner)
                    )
                return New(new_binder, go(go(q.continuation, ren), inner))
            if isinstance(q, Receive):
                return Receive(s(q.channel), binder, go(q.continuation, inner))
            return New(binder, go(q.continuation, inner))
        raise TypeError(q)

    return go(p, sub)


def alpha_canonicalize(p: Process) -> Process:
    """Rename binders so that no binder shadows another binder or a free
    variable; the result is stable under pretty/parse round-trips."""
    used: set[str] = set(free_vars(p))

    def go(q: Process, ren: dict[str, str]) -> Process:
        if isinstance(q, Deadlock):
            return q
        sub = Substitution.of({x: Var(y) for x, y in ren.items()})
        if isinstance(q, Send):
            return Send(sub(q.channel), sub(q.payload), go(q.continuation, ren))
        if isinstance(q, (Match, Mismatch)):
            return type(q)(sub(q.left), sub(q.right), go(q.continuation, ren))
        if isinstance(q, TauPrefix):
            return TauPrefix(go(q.continuation, ren))
        if isinstance(q, (Parallel, Choice)):
            return type(q)(go(q.left, ren), go(q.right, ren))
        if isinstance(q, Replicate):
            return Replicate(go(q.body, ren))
        if isinstance(q, (Receive, New)):
            binder = q.binder
            fresh = _fresh_avoiding(binder, used)
            used.add(fresh)
            ren2 = dict(ren)
            if fresh != binder or binder in ren:
                ren2[binder] = fresh
            elif binder in ren2:
                del ren2[binder]
            if isinstance(q, Receive):
                return Receive(sub(q.channel), fresh, go(q.continuation, ren2))
            return New(fresh, go(q.continuation, ren2))
        raise TypeError(q)

    return go(p, {})


def canonical_render(p: Process, mapping: Optional[dict[str, str]] = None) -> str:
    """Rendering with binders renamed positionally; free variables kept.

    `mapping` pre-seeds renamings (shared across the two sides of a game
    node so frame variables and privates rename consistently).
    """
    if mapping is None:
        mapping = {}
    counter = [len({v for v in mapping.values() if v.startswith("%")})]

    def rename(x: str) -> str:
        got = mapping.get(x)
        if got is not None:
            return got
        if "#" in x or x.startswith("?"):
            # session-generated identifier: canonicalize positionally so keys
            # are stable across runs
            counter[0] += 1
            name = f"%g{counter[0]}"
            mapping[x] = name
            return name
        return x

    def bind(x: str) -> str:
        counter[0] += 1
        name = f"%{counter[0]}"
        mapping[x] = name
        return name

    def rt(t: Term) -> str:
        if isinstance(t, Var):
            return rename(t.name)
        return f"{t.fn}({','.join(rt(a) for a in t.args)})"

    def go(q: Process) -> str:
        if isinstance(q, Deadlock):
            return "0"
        if isinstance(q, Send):
            return f"out({rt(q.channel)},{rt(q.payload)}).{go(q.continuation)}"
        if isinstance(q, Receive):
            ch = rt(q.channel)
            old = mapping.get(q.binder)
            b = bind(q.binder)
            s = f"in({ch},{b}).{go(q.continuation)}"
            if old is None:
                mapping.pop(q.binder, None)
            else:
                mapping[q.binder] = old
            return s
        if isinstance(q, Match):
            return f"[{rt(q.left)}={rt(q.right)}]{go(q.continuation)}"
        if isinstance(q, Mismatch):
            return f"[{rt(q.left)}!={rt(q.right)}]{go(q.continuation)}"
        if isinstance(q, New):
            old = mapping.get(q.binder)
            b = bind(q.binder)
            s = f"new {b}.{go(q.continuation)}"
            if old is None:
                mapping.pop(q.binder, None)
            else:
                mapping[q.binder] = old
            return s
        if isinstance(q, Parallel):
            return f"({go(q.left)}|{go(q.right)})"
        if isinstance(q, Choice):
            return f"({go(q.left)}+{go(q.right)})"
        if isinstance(q, Replicate):
            return f"rep({go(q.body)})"
        if isinstance(q, TauPrefix):
            return f"tau.{go(q.continuation)}"
        raise TypeError(q)

    return go(p)


def alpha_equiv(p: Process, q: Process) -> bool:
    return p == q or canonical_render(p) == canonical_render(q)


def guard_pairs(p: Process) -> Iterator[tuple[str, Term, Term]]:
    """All match/mismatch guard pairs occurring anywhere in the process."""
    if isinstance(p, (Match, Mismatch)):
        yield ("=" if isinstance(p, Match) else "!=", p.left, p.right)
        yield from guard_pairs(p.continuation)
    elif isinstance(p, (Send, Receive, TauPrefix)):
        yield from guard_pairs(p.continuation)
    elif isinstance(p, New):
        yield from guard_pairs(p.continuation)
    elif isinstance(p, (Parallel, Choice)):
        yield from guard_pairs(p.left)
        yield from guard_pairs(p.right)
    elif isinstance(p, Replicate):
        yield from guard_pairs(p.body)


def output_terms(p: Process) -> Iterator[Term]:
    """Payloads of all send prefixes anywhere in the process."""
    if isinstance(p, Send):
        yield p.payload
        yield from output_terms(p.continuation)
    elif isinstance(p, (Receive, TauPrefix, Match, Mismatch, New)):
        yield from output_terms(p.continuation)
    elif isinstance(p, (Parallel, Choice)):
        yield from output_terms(p.left)
        yield from output_terms(p.right)
    elif isinstance(p, Replicate):
        yield from output_terms(p.body)


def is_pi_fragment(p: Process) -> bool:
    """True when every message is a bare variable (no theory symbols)."""
    if isinstance(p, Deadlock):
        return True
    if isinstance(p, Send):
        return (isinstance(p.channel, Var) and isinstance(p.payload, Var)
                and is_pi_fragment(p.continuation))
    if isinstance(p, Receive):
        return isinstance(p.channel, Var) and is_pi_fragment(p.continuation)
    if isinstance(p, (Match, Mismatch)):
        return (isinstance(p.left, Var) and isinstance(p.right, Var)
                and is_pi_fragment(p.continuation))
    if isinstance(p, New):
        return is_pi_fragment(p.continuation)
    if isinstance(p, (Parallel, Choice)):
        return is_pi_fragment(p.left) and is_pi_fragment(p.right)
    if isinstance(p, Replicate):
        return is_pi_fragment(p.body)
    if isinstance(p, TauPrefix):
        return is_pi_fragment(p.continuation)
    raise TypeError(p)


def has_replication(p: Process) -> bool:
    if isinstance(p, Replicate):
        return True
    if isinstance(p, (Send, Receive, Match, Mismatch, New, TauPrefix)):
        return has_replication(p.continuation)
    if isinstance(p, (Parallel, Choice)):
        return has_replication(p.left) or has_replication(p.right)
    return False


def unfold_replication(p: Process, copies: int) -> Process:
    """Replace every replication by `copies` parallel copies of its body."""
    def go(q: Process) -> Process:
        if isinstance(q, Replicate):
            body = go(q.body)
            if copies <= 0:
                return Deadlock()
            out = body
            for _ in range(copies - 1):
                out = Parallel(out, body)
            return out
        if isinstance(q, Send):
            return Send(q.channel, q.payload, go(q.continuation))
        if isinstance(q, Receive):
            return Receive(q.channel, q.binder, go(q.continuation))
        if isinstance(q, (Match, Mismatch)):
            return type(q)(q.left, q.right, go(q.continuation))
        if isinstance(q, New):
            return New(q.binder, go(q.continuation))
        if isinstance(q, (Parallel, Choice)):
            return type(q)(go(q.left), go(q.right))
        if isinstance(q, TauPrefix):
            return TauPrefix(go(q.continuation))
        return q

    return alpha_canonicalize(go(p))


# ---------------------------------------------------------------------------
# Extended processes


class DomainClash(Exception):
    pass


@dataclass(frozen=True, repr=False)
class ExtendedProcess:
    """Normal form: new x1...xn. (frame | body).

    `frame_order` records the extension order of the frame domain so that
    canonical keys are stable; `frame` is idempotent, its domain is disjoint
    from the private names, and the body mentions no frame-domain variable.
    """

    privates: tuple[str, ...]
    frame: Substitution
    body: Process
    frame_order: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.frame_order:
            object.__setattr__(self, "frame_order", tuple(sorted(self.frame.domain)))
        if set(self.frame_order) != set(self.frame.domain):
            raise ValueError("frame_order must enumerate the frame domain")
        if not self.frame.is_idempotent():
            raise ValueError("frame must be idempotent")
        if set(self.privates) & self.frame.domain:
            raise ValueError("frame domain clashes with private names")
        if free_vars(self.body) & self.frame.domain:
            raise ValueError("frame must be fully applied to the body")

    def free_variables(self) -> frozenset[str]:
        out = set(free_vars(self.body)) | set(self.frame.domain)
        for _, t in self.frame.bindings:
            out |= term_free_vars(t)
        return frozenset(out - set(self.privates))

    def __repr__(self):
        return pretty_extended(self)


def make_extended(
    privates: tuple[str, ...],
    frame: Substitution,
    body: Process,
    th: Optional[Theory] = None,
    frame_order: tuple[str, ...] = (),
) -> ExtendedProcess:
    """Normalize terms, apply the frame to the body, drop unused privates."""
    body = substitute(body, frame)
    if th is not None:
        frame = Substitution.of({x: normalize(t, th) for x, t in frame.bindings})
        body = _normalize_terms(body, th)
    used = free_vars(body) | frozenset(
        v for _, t in frame.bindings for v in term_free_vars(t)
    )
    privates = tuple(x for x in privates if x in used)
    order = tuple(x for x in (frame_order or sorted(frame.domain)) if x in frame.domain)
    return ExtendedProcess(privates, frame, body, order)


def _normalize_terms(p: Process, th: Theory) -> Process:
    if isinstance(p, Deadlock):
        return p
    if isinstance(p, Send):
        return Send(normalize(p.channel, th), normalize(p.payload, th),
                    _normalize_terms(p.continuation, th))
    if isinstance(p, Receive):
        return Receive(normalize(p.channel, th), p.binder,
                       _normalize_terms(p.continuation, th))
    if isinstance(p, (Match, Mismatch)):
        return type(p)(normalize(p.left, th), normalize(p.right, th),
                       _normalize_terms(p.continuation, th))
    if isinstance(p, New):
        return New(p.binder, _normalize_terms(p.continuation, th))
    if isinstance(p, (Parallel, Choice)):
        return type(p)(_normalize_terms(p.left, th), _normalize_terms(p.right, th))
    if isinstance(p, Replicate):
        return Replicate(_normalize_terms(p.body, th))
    if isinstance(p, TauPrefix):
        return TauPrefix(_normalize_terms(p.continuation, th))
    raise TypeError(p)


def promote(p: Process | ExtendedProcess) -> ExtendedProcess:
    if isinstance(p, ExtendedProcess):
        return p
    q = p
    privates = []
    while isinstance(q, New):
        privates.append(q.binder)
        q = q.continuation
    return ExtendedProcess(tuple(privates), Substitution.identity(), q)


def compose_parallel(a: ExtendedProcess, b: ExtendedProcess) -> ExtendedProcess:
    """Normal-form parallel composition with capture-avoiding renaming of the
    private names (defined only for disjoint frame domains)."""
    if a.frame.domain & b.frame.domain:
        clash = sorted(a.frame.domain & b.frame.domain)
        raise DomainClash(f"frame domains overlap on {', '.join(clash)}")

    avoid = set(a.free_variables()) | set(b.free_variables()) | set(b.privates)
    ren_a: dict[str, str] = {}
    for x in a.privates:
        if x in avoid:
            y = _fresh_avoiding(x, avoid | set(ren_a.values()) | set(a.privates))
            ren_a[x] = y
    sub_a = Substitution.of({x: Var(y) for x, y in ren_a.items()})
    a_priv = tuple(ren_a.get(x, x) for x in a.privates)
    a_frame = Substitution.of({x: sub_a(t) for x, t in a.frame.bindings})
    a_body = substitute(a.body, sub_a)

    avoid2 = avoid | set(a_priv) | {v for x, t in a_frame.bindings for v in term_free_vars(t)}
    ren_b: dict[str, str] = {}
    for x in b.privates:
        if x in avoid2 or x in a_priv:
            y = _fresh_avoiding(x, avoid2 | set(ren_b.values()) | set(b.privates))
            ren_b[x] = y
    sub_b = Substitution.of({x: Var(y) for x, y in ren_b.items()})
    b_priv = tuple(ren_b.get(x, x) for x in b.privates)
    b_frame = Substitution.of({x: sub_b(t) for x, t in b.frame.bindings})
    b_body = substitute(b.body, sub_b)

    merged = Substitution(tuple(a_frame.bindings) + tuple(b_frame.bindings))
    if not merged.is_idempotent():
        raise DomainClash("merged frame is not idempotent")
    return ExtendedProcess(
        a_priv + b_priv, merged, Parallel(a_body, b_body),
        a.frame_order + b.frame_order,
    )


def canonical_key(
    a: ExtendedProcess, b: Optional[ExtendedProcess] = None
) -> str:
    """Alpha-canonical rendering of one extended process or a pair; frame
    variables and private names rename consistently across the pair."""
    mapping: dict[str, str] = {}
    for i, x in enumerate(a.frame_order):
        mapping[x] = f"%w{i}"

    gen_counter = [0]

    def render_one(ep: ExtendedProcess, shared: dict[str, str]) -> str:
        local = dict(shared)
        parts = []
        for j, x in enumerate(ep.privates):
            local[x] = f"%n{j}"
        for i, x in enumerate(ep.frame_order):
            t = ep.frame.get(x)
            parts.append(f"%w{i}={_rt(t, local, shared)}")
        body = canonical_render(ep.body, local)
        for k, v in local.items():
            if v.startswith("%g"):
                shared.setdefault(k, v)
        return f"nu[{len(ep.privates)}]{{{';'.join(parts)}}}" + body

    def _rt(t: Term, local: dict[str, str], shared: dict[str, str]) -> str:
        if isinstance(t, Var):
            x = t.name
            got = local.get(x)
            if got is not None:
                return got
            if "#" in x or x.startswith("?"):
                gen_counter[0] += 1
                name = f"%g{gen_counter[0]}a"
                local[x] = name
                shared[x] = name
                return name
            return x
        return f"{t.fn}({','.join(_rt(s, local, shared) for s in t.args)})"

    if b is None:
        return render_one(a, mapping)
    shared = dict(mapping)
    left = render_one(a, shared)
    right = render_one(b, shared)
    return left + "  ~  " + right


# ---------------------------------------------------------------------------
# Pretty printer

_ATOMIC = (Deadlock, Send, Receive, Match, Mismatch, New, Replicate, TauPrefix)


def pretty(p: Process) -> str:
    return _pp(p, 0)


def _pp(p: Process, level: int) -> str:
    # level: 0 = parallel context, 1 = choice context, 2 = prefix context
    if isinstance(p, Parallel):
        s = f"{_pp(p.left, 1)} | {_pp(p.right, 1)}"
        return f"({s})" if level >= 1 else s
    if isinstance(p, Choice):
        s = f"{_pp(p.left, 2)} + {_pp(p.right, 2)}"
        return f"({s})" if level >= 2 else s
    if isinstance(p, Deadlock):
        return "0"
    if isinstance(p, Send):
        return f"out({render_term(p.channel)}, {render_term(p.payload)}). {_pp(p.continuation, 2)}"
    if isinstance(p, Receive):
        return f"in({render_term(p.channel)}, {p.binder}). {_pp(p.continuation, 2)}"
    if isinstance(p, Match):
        return f"[{render_term(p.left)} = {render_term(p.right)}] {_pp(p.continuation, 2)}"
    if isinstance(p, Mismatch):
        return f"[{render_term(p.left)} != {render_term(p.right)}] {_pp(p.continuation, 2)}"
    if isinstance(p, New):
        names = [p.binder]
        q = p.continuation
        while isinstance(q, New):
            names.append(q.binder)
            q = q.continuation
        return f"new {', '.join(names)}. {_pp(q, 2)}"
    if isinstance(p, Replicate):
        return f"rep {_pp(p.body, 2)}"
    if isinstance(p, TauPrefix):
        return f"tau. {_pp(p.continuation, 2)}"
    raise TypeError(p)


def pretty_extended(ep: ExtendedProcess) -> str:
    parts = []
    if ep.privates:
        parts.append(f"new {', '.join(ep.privates)}.")
    binds = ", ".join(f"{x} = {render_term(ep.frame.get(x))}" for x in ep.frame_order)
    parts.append("{" + binds + "}")
    if not isinstance(ep.body, Deadlock):
        parts.append("| " + pretty(ep.body))
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Parser


class ParseError(Exception):
    def __init__(self, line: int, column: int, expected: str, found: str = ""):
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        msg = f"line {line}, column {column}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+|#[^\n]*)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_'#]*)"
    r"|(?P<op>!=|->|[()\[\]{}.,=+|])"
    r"|(?P<num>0)"
)

_KEYWORDS = {"new", "out", "in", "tau", "if", "then", "else", "rep"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    line, col, i = 1, 1, 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if not m:
            raise ParseError(line, col, "a token", src[i])
        text = m.group(0)
        kind = m.lastgroup or ""
        if kind != "ws":
            if kind == "num":
                kind = "zero"
            elif kind == "op":
                kind = text
            elif kind == "ident" and text in _KEYWORDS:
                kind = text
            toks.append(_Tok(kind, text, line, col))
        for ch in text:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        i = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str, what: str = "") -> _Tok:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(t.line, t.col, what or repr(kind), t.text or "end of input")
        return self.next()

    # -- terms ------------------------------------------------------------
    def term(self) -> Term:
        t = self.expect("ident", "an identifier")
        if self.peek().kind == "(":
            self.next()
            args: list[Term] = []
            if self.peek().kind != ")":
                args.append(self.term())
                while self.peek().kind == ",":
                    self.next()
                    args.append(self.term())
            self.expect(")", "')'")
            return App(t.text, tuple(args))
        return Var(t.text)

    # -- processes ---------------------------------------------------------
    def process(self) -> Process:
        p = self.choice()
        while self.peek().kind == "|":
            self.next()
            p = Parallel(p, self.choice())
        return p

    def choice(self) -> Process:
        p = self.prefix()
        while self.peek().kind == "+":
            self.next()
            p = Choice(p, self.prefix())
        return p

    def _continuation(self) -> Process:
        if self.peek().kind == ".":
            self.next()
            return self.prefix()
        return Deadlock()

    def prefix(self) -> Process:
        t = self.peek()
        if t.kind == "zero":
            self.next()
            return Deadlock()
        if t.kind == "(":
            self.next()
            p = self.process()
            self.expect(")", "')'")
            return p
        if t.kind == "new":
            self.next()
            names = [self.expect("ident", "a name").text]
            while self.peek().kind == ",":
                self.next()
                names.append(self.expect("ident", "a name").text)
            self.expect(".", "'.'")
            p = self.prefix()
            for x in reversed(names):
                p = New(x, p)
            return p
        if t.kind == "out":
            self.next()
            self.expect("(", "'('")
            chan = self.term()
            self.expect(",", "','")
            payload = self.term()
            self.expect(")", "')'")
            return Send(chan, payload, self._continuation())
        if t.kind == "in":
            self.next()
            self.expect("(", "'('")
            chan = self.term()
            self.expect(",", "','")
            binder = self.expect("ident", "a binder").text
            self.expect(")", "')'")
            return Receive(chan, binder, self._continuation())
        if t.kind == "tau":
            self.next()
            return TauPrefix(self._continuation())
        if t.kind == "[":
            self.next()
            left = self.term()
            op = self.peek()
            if op.kind == "=":
                self.next()
                cls = Match
            elif op.kind == "!=":
                self.next()
                cls = Mismatch
            else:
                raise ParseError(op.line, op.col, "'=' or '!='", op.text)
            right = self.term()
            self.expect("]", "']'")
            return cls(left, right, self.prefix())
        if t.kind == "if":
            self.next()
            left = self.term()
            self.expect("=", "'='")
            right = self.term()
            self.expect("then", "'then'")
            then_p = self.prefix()
            self.expect("else", "'else'")
            else_p = self.prefix()
            return if_then_else(left, right, then_p, else_p)
        if t.kind == "rep":
            self.next()
            return Replicate(self.prefix())
        raise ParseError(t.line, t.col, "a process", t.text or "end of input")

    # -- extended processes --------------------------------------------------
    def extended(self) -> ExtendedProcess:
        privates: list[str] = []
        while self.peek().kind == "new":
            save = self.pos
            self.next()
            names = [self.expect("ident", "a name").text]
            while self.peek().kind == ",":
                self.next()
                names.append(self.expect("ident", "a name").text)
            self.expect(".", "'.'")
            if self.peek().kind != "{" and self.peek().kind != "new":
                self.pos = save
                break
            privates.extend(names)
        self.expect("{", "'{'")
        bindings: list[tuple[str, Term]] = []
        order: list[str] = []
        if self.peek().kind != "}":
            while True:
                name = self.expect("ident", "a frame variable").text
                self.expect("=", "'='")
                bindings.append((name, self.term()))
                order.append(name)
                if self.peek().kind == ",":
                    self.next()
                    continue
                break
        self.expect("}", "'}'")
        body: Process = Deadlock()
        if self.peek().kind == "|":
            self.next()
            body = self.process()
        return ExtendedProcess(
            tuple(privates), Substitution(tuple(bindings)), body, tuple(order)
        )


def parse_process(src: str) -> Process:
    p = _Parser(src)
    proc = p.process()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(tok.line, tok.col, "end of input", tok.text)
    return alpha_canonicalize(proc)


def parse(src: str) -> Process | ExtendedProcess:
    """Parse a process or an extended process (frame literal form)."""
    probe = _Parser(src)
    is_extended = False
    # lookahead: optional 'new x,...,y.' prefixes followed by '{'
    try:
        while probe.peek().kind == "new":
            probe.next()
            probe.expect("ident")
            while probe.peek().kind == ",":
                probe.next()
                probe.expect("ident")
            probe.expect(".")
        if probe.peek().kind == "{":
            is_extended = True
    except ParseError:
        is_extended = False
    if not is_extended:
        return parse_process(src)
    p = _Parser(src)
    ep = p.extended()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(tok.line, tok.col, "end of input", tok.text)
    return ExtendedProcess(
        ep.privates, ep.frame, alpha_canonicalize(ep.body), ep.frame_order
    )
