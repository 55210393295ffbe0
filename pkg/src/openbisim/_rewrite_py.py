"""Pure-Python rewrite kernel.

Terms are encoded compactly for the kernel: a variable is a plain ``str``, an
application is a tuple ``(fn, arg0, arg1, ...)``.  Rules come pre-encoded the
same way together with the set of variable names occurring in them.

The compiled twin (``openbisim._rewrite``) implements the identical algorithm;
`openbisim.kernel` picks whichever is importable.
"""

from __future__ import annotations

IMPLEMENTATION = "python"


class RewriteLimit(Exception):
    """Rewriting exceeded the configured step ceiling."""


def _match(pattern, term, varnames, bindings):
    """One-way matching of `pattern` against `term`; extends `bindings`.

    Returns True on success (bindings updated in place), False otherwise.
    Non-linear patterns require syntactically equal matches, which is the
    right notion here because matched subterms are already in normal form.
    """
    if isinstance(pattern, str):
        if pattern in varnames:
            bound = bindings.get(pattern)
            if bound is None:
                bindings[pattern] = term
                return True
            return bound == term
        return pattern == term
    if isinstance(term, str) or pattern[0] != term[0] or len(pattern) != len(term):
        return False
    for i in range(1, len(pattern)):
        if not _match(pattern[i], term[i], varnames, bindings):
            return False
    return True


def _instantiate(template, varnames, bindings):
    if isinstance(template, str):
        if template in varnames:
            return bindings[template]
        return template
    return (template[0],) + tuple(
        _instantiate(template[i], varnames, bindings) for i in range(1, len(template))
    )


def normalize(term, rules, ceiling):
    """Exhaustive innermost rewriting; unique normal form for convergent rules.

    `rules` is a sequence of (lhs, rhs, varnames) triples.  Raises
    RewriteLimit after `ceiling` rule applications (broken user theory guard).
    """
    steps = [0]

    def norm(t):
        if isinstance(t, str):
            return t
        t = (t[0],) + tuple(norm(t[i]) for i in range(1, len(t)))
        while True:
            for lhs, rhs, varnames in rules:
                bindings = {}
                if _match(lhs, t, varnames, bindings):
                    steps[0] += 1
                    if steps[0] > ceiling:
                        raise RewriteLimit()
                    t = _instantiate(rhs, varnames, bindings)
                    if isinstance(t, str):
                        return t
                    t = (t[0],) + tuple(norm(t[i]) for i in range(1, len(t)))
                    break
            else:
                return t

    return norm(term)
