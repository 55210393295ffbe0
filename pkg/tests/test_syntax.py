"""Syntax-layer tests: parsing, printing, alpha handling, composition."""

import pytest

from openbisim.syntax import (
    Choice, Deadlock, DomainClash, ExtendedProcess, Match, Mismatch, New,
    Parallel, ParseError, Receive, Send, TauPrefix, alpha_canonicalize,
    alpha_equiv, compose_parallel, free_vars, guard_pairs, make_extended,
    parse, parse_process, pretty, promote, substitute,
)
from openbisim.terms import App, Substitution, Var

CORPUS_SOURCES = [
    "0",
    "new z. out(x, pair(z, y)). in(z, w). 0",
    "if x = pk(k) then out(a, aenc(m, pk(k))). 0 else out(a, r). 0",
    "new k, r. out(a, pk(k)). in(a, x). out(a, r). 0",
    "tau. 0 + tau. tau. 0 + tau. [x != y] tau. 0",
    "rep in(a, x). out(a, hash(x)). 0",
    "(in(a, x). 0 + tau. 0) | out(b, c). 0",
    "[x != y] (out(x, y). 0 | in(z, w). 0)",
    "new n. out(a, n). in(a, x). new k. out(a, sign(x, k)). in(a, y). [y = sign(n, k)] tau. 0",
]


def test_parse_mobility_example():
    p = parse("new z. out(x, pair(z,y)). in(z, w). 0")
    assert p == New(
        "z",
        Send(
            Var("x"), App("pair", (Var("z"), Var("y"))),
            Receive(Var("z"), "w", Deadlock()),
        ),
    )


def test_parse_deadlock():
    assert parse("0") == Deadlock()


def test_parse_if_then_else_desugars():
    p = parse("if x = pk(k) then out(a, aenc(m, pk(k))).0 else out(a, r).0")
    expected = Choice(
        Match(Var("x"), App("pk", (Var("k"),)),
              Send(Var("a"), App("aenc", (Var("m"), App("pk", (Var("k"),)))), Deadlock())),
        Mismatch(Var("x"), App("pk", (Var("k"),)),
                 Send(Var("a"), Var("r"), Deadlock())),
    )
    assert p == expected


def test_parse_error_positions():
    with pytest.raises(ParseError) as exc:
        parse("out(a m). 0")
    assert exc.value.line == 1
    assert exc.value.column == 7
    assert "','" in exc.value.expected


def test_pretty_roundtrip_corpus():
    for src in CORPUS_SOURCES:
        p = parse_process(src)
        again = parse_process(pretty(p))
        assert again == p, src  # identity on canonical ASTs


def test_pretty_examples():
    assert pretty(Deadlock()) == "0"
    assert pretty(New("z", Send(Var("x"), Var("z"), Deadlock()))) == "new z. out(x, z). 0"


def test_free_vars():
    assert free_vars(parse("new z. out(x, z). 0")) == {"x"}
    assert free_vars(parse("in(a, x). [x = b] tau. 0")) == {"a", "b"}


def test_alpha_canonicalize_unshadows():
    p = parse_process("in(a, x). in(a, x). out(a, x). 0")
    inner = p.continuation
    assert p.binder != inner.binder
    # the output refers to the innermost binder
    assert inner.continuation.payload == Var(inner.binder)


def test_substitute_renames_captured_binder():
    # the bound name x is renamed when hash(x) is pushed under new x
    body = New("x", Match(Var("z"), App("hash", (Var("x"),)), TauPrefix(Deadlock())))
    out = substitute(body, Substitution.of({"z": App("hash", (Var("x"),))}))
    assert isinstance(out, New)
    assert out.binder != "x"
    guard = out.continuation
    assert guard.left == App("hash", (Var("x"),))
    assert guard.right == App("hash", (Var(out.binder),))


def test_substitute_identity():
    p = parse("new z. out(x, z). in(z, w). 0")
    assert substitute(p, Substitution.identity()) == p


def test_alpha_equiv():
    assert alpha_equiv(parse("new a. out(x, a). 0"), parse("new b. out(x, b). 0"))
    assert not alpha_equiv(parse("new a. out(x, a). 0"), parse("new a. out(y, a). 0"))


def test_guard_pairs():
    p = parse("if x = y then tau. 0 else [u != v] tau. 0")
    pairs = set(guard_pairs(p))
    assert ("=", Var("x"), Var("y")) in pairs
    assert ("!=", Var("x"), Var("y")) in pairs
    assert ("!=", Var("u"), Var("v")) in pairs


# ---------------------------------------------------------------------------
# Extended processes


def test_parse_extended():
    ep = parse("new m, n. {v = m, w = n} | 0")
    assert isinstance(ep, ExtendedProcess)
    assert ep.privates == ("m", "n")
    assert ep.frame.get("v") == Var("m")
    assert ep.frame_order == ("v", "w")


def test_compose_parallel_empty_frames():
    a = promote(parse_process("in(u, w). 0"))
    b = promote(parse_process("out(c, d). 0"))
    c = compose_parallel(a, b)
    assert c.privates == ()
    assert c.frame.is_identity()
    assert isinstance(c.body, Parallel)


def test_compose_parallel_renames_capture():
    a = parse("new z. {u = z}")
    assert isinstance(a, ExtendedProcess)
    b = promote(parse_process("in(z, w). 0"))  # free z on the right
    c = compose_parallel(a, b)
    # the private z of the left was renamed away from the right's free z
    assert c.privates and c.privates[0] != "z"
    assert c.frame.get("u") == Var(c.privates[0])
    assert "z" in free_vars(c.body)


def test_compose_parallel_domain_clash():
    a = parse("new m. {u = m}")
    b = parse("new n. {u = n}")
    with pytest.raises(DomainClash):
        compose_parallel(a, b)


def test_make_extended_drops_unused_privates():
    ep = make_extended(("m", "n"), Substitution.of({"u": Var("m")}), Deadlock())
    assert ep.privates == ("m",)


def test_make_extended_applies_frame():
    # frames are fully applied to bodies in normal form
    body = Send(Var("c"), Var("u"), Deadlock())
    ep = make_extended(("m",), Substitution.of({"u": Var("m")}), body)
    assert ep.body.payload == Var("m")
