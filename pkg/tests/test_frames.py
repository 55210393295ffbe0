"""Frame deduction, recipe enumeration, static equivalence."""

import itertools

import pytest

from openbisim.frames import (
    Distinguished, Equivalent, Frame, UnknownAtDepth, deducible,
    enumerate_recipes, static_equiv,
)
from openbisim.terms import (
    App, Substitution, Var, dy_asym, dy_blind, eq_mod, free_vars, parse_term,
    term_size,
)

TH = dy_asym()
THB = dy_blind()


def F(privates, **binds):
    return Frame(
        frozenset(privates),
        Substitution.of({k: parse_term(v) for k, v in binds.items()}),
        tuple(binds),
    )


# ---------------------------------------------------------------------------
# Independent oracle: brute-force recipe enumeration (no dedup, no saturation)


def brute_recipes(atoms, th, depth):
    """All recipe trees over `atoms` and the signature, up to `depth`."""
    level = list(atoms)
    out = list(level)
    for _ in range(depth):
        nxt = []
        for fn, arity in th.symbols():
            if arity == 0:
                continue
            for args in itertools.product(out, repeat=arity):
                nxt.append(App(fn, tuple(args)))
        # keep only depth-incrementing terms to avoid double counting
        seen = set(out)
        nxt = [t for t in dict.fromkeys(nxt) if t not in seen]
        out += nxt
        level = nxt
    return out


def test_enumerate_depth0():
    f = F(set(), u="a", v="b")
    rs = list(enumerate_recipes(f, TH, 0))
    names = {r.name for r in rs if isinstance(r, Var)}
    assert {"u", "v"} <= names
    assert any(n.startswith("?") for n in names)  # fresh public variable


def test_enumerate_depth1_contains_unary_applications():
    f = F(set(), u="a")
    rs = set(map(str, enumerate_recipes(f, TH, 1)))
    for want in ("hash(u)", "fst(u)", "snd(u)", "pk(u)"):
        assert want in rs


def test_enumerate_count_matches_brute_force():
    # dedup off: the stream enumerates exactly the brute-force recipe trees
    f = F(set(), u="a")
    atoms = [Var("u"), Var("?pub")]
    got = list(enumerate_recipes(f, TH, 1, fresh=("?pub",), dedup=False))
    want = brute_recipes(atoms, TH, 1)
    assert len(got) == len(want)
    assert set(got) == set(want)


def test_enumerate_deterministic_order():
    f = F({"m"}, u="m", v="hash(m)")
    a = list(enumerate_recipes(f, TH, 1))
    b = list(enumerate_recipes(f, TH, 1))
    assert a == b
    sizes = [term_size(r) for r in a]
    assert sizes == sorted(sizes)


# ---------------------------------------------------------------------------
# deducible


def test_deducible_first_projection():
    f = F({"m"}, w="pair(m, n)")
    assert deducible(f, Var("m"), TH) == parse_term("fst(w)")


def test_deducible_public_variable():
    f = F(set())
    assert deducible(f, Var("x"), TH) == Var("x")


def test_deducible_encrypted_secret_not_found():
    f = F({"k", "s"}, u="aenc(s, pk(k))")
    assert deducible(f, Var("s"), TH, depth=4) is None
    # oracle: exhaustive depth-4 enumeration finds no recipe either
    for r in enumerate_recipes(f, TH, 2, dedup=False):
        assert not eq_mod(f.binding(r), Var("s"), TH)


def test_deducible_key_unlocks():
    f = F({"s"}, u="aenc(s, pk(k))")  # k public here
    r = deducible(f, Var("s"), TH)
    assert r is not None
    assert eq_mod(f.binding(r), Var("s"), TH)


# ---------------------------------------------------------------------------
# static equivalence: the three section-3.1 frame pairs


def test_static_hash_pair_distinguished():
    a = F({"m", "n"}, v="m", w="n")
    b = F({"m"}, v="m", w="hash(m)")
    v = static_equiv(a, b, TH)
    assert isinstance(v, Distinguished)
    assert {str(v.left_recipe), str(v.right_recipe)} == {"hash(v)", "w"}


def test_static_undetectable_decryption_equivalent():
    a = F({"m", "k", "n"}, x1="aenc(m, pk(k))", x2="n")
    b = F({"m", "k"}, x1="aenc(m, pk(k))", x2="k")
    assert isinstance(static_equiv(a, b, TH), Equivalent)


def test_static_tagged_pair_distinguished():
    a = F({"m", "k", "n"}, x3="aenc(pair(t, m), pk(k))", x4="n")
    b = F({"m", "k"}, x3="aenc(pair(t, m), pk(k))", x4="k")
    v = static_equiv(a, b, TH)
    assert isinstance(v, Distinguished)
    assert {str(v.left_recipe), str(v.right_recipe)} == {"fst(adec(x3, x4))", "t"}


def test_static_identical_frames_equivalent():
    a = F({"m", "n"}, v="m", w="n")
    assert isinstance(static_equiv(a, a, TH), Equivalent)


def test_static_requires_shared_domain():
    a = F({"m"}, v="m")
    b = F({"m"}, w="m")
    with pytest.raises(ValueError):
        static_equiv(a, b, TH)


def test_static_symmetric_and_alpha_invariant():
    a = F({"m", "n"}, v="m", w="n")
    b = F({"m"}, v="m", w="hash(m)")
    va = static_equiv(a, b, TH)
    vb = static_equiv(b, a, TH)
    assert isinstance(va, Distinguished) and isinstance(vb, Distinguished)
    # alpha renaming of privates and reordering of restrictions is invisible
    a2 = F({"p", "q"}, v="q", w="p")
    a2 = Frame(a2.privates, Substitution.of({"v": Var("p"), "w": Var("q")}), ("v", "w"))
    assert isinstance(static_equiv(a2, b, TH), Distinguished)


def test_distinguished_self_check():
    a = F({"m", "n"}, v="m", w="n")
    b = F({"m"}, v="m", w="hash(m)")
    v = static_equiv(a, b, TH)
    l, r = v.pair()
    ea = eq_mod(a.binding(l), a.binding(r), TH)
    eb = eq_mod(b.binding(l), b.binding(r), TH)
    assert ea != eb


def test_distinguished_recipes_avoid_privates():
    a = F({"m", "n"}, v="m", w="n")
    b = F({"m"}, v="m", w="hash(m)")
    v = static_equiv(a, b, TH)
    for r in v.pair():
        assert not free_vars(r) & (a.privates | b.privates)


def test_static_blind_signature_frames():
    a = F({"k", "n"}, u="n", v="sign(blind(n, z), k)")
    assert isinstance(static_equiv(a, a, THB), Equivalent)


def test_static_fixed_server_final_frames_equivalent():
    a = F({"a", "b", "c", "n"}, u="pk(a)", v="pk(b)", w="pk(c)",
          t="aenc(pair(z, pair(n, pk(c))), pk(a))")
    b = F({"a", "b", "c", "m"}, u="pk(a)", v="pk(b)", w="pk(c)", t="m")
    assert isinstance(static_equiv(a, b, TH), Equivalent)


def test_static_reconstructable_ciphertext_distinguished():
    # deterministic encryption of public material is reconstructable
    a = F({"k"}, u="pk(k)", v="aenc(m, pk(k))")
    b = F({"k", "r"}, u="pk(k)", v="r")
    v = static_equiv(a, b, TH)
    assert isinstance(v, Distinguished)


def test_unknown_at_depth_for_opaque_theory():
    # a theory we refuse to saturate decisively: flag forced off
    from openbisim.terms import Theory
    th = Theory(
        name="opaque", signature=dict(TH.signature), rules=TH.rules,
        saturation_complete=False,
    )
    a = F({"m", "k", "n"}, x1="aenc(m, pk(k))", x2="n")
    b = F({"m", "k"}, x1="aenc(m, pk(k))", x2="k")
    v = static_equiv(a, b, th, depth=1)
    assert isinstance(v, (UnknownAtDepth, Equivalent)) and isinstance(v, UnknownAtDepth)
