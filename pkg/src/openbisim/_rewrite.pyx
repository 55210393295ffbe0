# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled rewrite kernel: exhaustive innermost rewriting over the tuple
term encoding (str = variable, tuple = application).

Mirrors openbisim._rewrite_py exactly; selected by openbisim.kernel when the
extension built.  Raises the shared RewriteLimit from the pure module so
callers catch one exception type.
"""

from openbisim._rewrite_py import RewriteLimit

IMPLEMENTATION = "cython"


cdef bint _match(object pattern, object term, frozenset varnames, dict bindings):
    cdef Py_ssize_t i, n
    if type(pattern) is str:
        if pattern in varnames:
            bound = bindings.get(pattern)
            if bound is None:
                bindings[pattern] = term
                return True
            return bound == term
        return pattern == term
    if type(term) is str:
        return False
    n = len(<tuple>pattern)
    if (<tuple>pattern)[0] != (<tuple>term)[0] or n != len(<tuple>term):
        return False
    for i in range(1, n):
        if not _match((<tuple>pattern)[i], (<tuple>term)[i], varnames, bindings):
            return False
    return True


cdef object _instantiate(object template, frozenset varnames, dict bindings):
    cdef Py_ssize_t i, n
    if type(template) is str:
        if template in varnames:
            return bindings[template]
        return template
    n = len(<tuple>template)
    out = [(<tuple>template)[0]]
    for i in range(1, n):
        out.append(_instantiate((<tuple>template)[i], varnames, bindings))
    return tuple(out)


cdef object _norm(object t, tuple rules, long ceiling, long* steps):
    cdef Py_ssize_t i, n
    cdef dict bindings
    if type(t) is str:
        return t
    n = len(<tuple>t)
    out = [(<tuple>t)[0]]
    for i in range(1, n):
        out.append(_norm((<tuple>t)[i], rules, ceiling, steps))
    t = tuple(out)
    cdef bint fired = True
    while fired:
        fired = False
        for rule in rules:
            bindings = {}
            if _match((<tuple>rule)[0], t, (<tuple>rule)[2], bindings):
                steps[0] += 1
                if steps[0] > ceiling:
                    raise RewriteLimit()
                t = _instantiate((<tuple>rule)[1], (<tuple>rule)[2], bindings)
                if type(t) is str:
                    return t
                n = len(<tuple>t)
                out = [(<tuple>t)[0]]
                for i in range(1, n):
                    out.append(_norm((<tuple>t)[i], rules, ceiling, steps))
                t = tuple(out)
                fired = True
                break
    return t


def normalize(term, rules, ceiling):
    """Unique normal form under exhaustive innermost rewriting."""
    cdef long steps = 0
    cdef long c = ceiling
    return _norm(term, tuple(rules), c, &steps)
