"""Fresh identifier generation.

All identifiers live in one global namespace (names are just variables bound
by `new`).  Every checking session owns a single monotone counter; generated
identifiers render as ``base#N`` so they can never collide with source-level
identifiers, which may not contain ``#``.
"""

from __future__ import annotations

import itertools


class NameGen:
    """Monotone fresh-name source, confined to one checking session."""

    def __init__(self) -> None:
        self._counter = itertools.count(1)

    def fresh(self, base: str = "x") -> str:
        base = base.split("#", 1)[0] or "x"
        return f"{base}#{next(self._counter)}"

    def reserve(self, names) -> None:
        """Skip past any counters already present in `names` so freshly
        minted identifiers cannot collide with them."""
        top = 0
        for name in names:
            if "#" in name:
                tail = name.rsplit("#", 1)[1]
                if tail.isdigit():
                    top = max(top, int(tail))
        if top:
            current = next(self._counter)
            start = max(current, top + 1)
            self._counter = itertools.count(start)


def is_generated(name: str) -> bool:
    return "#" in name


def base_of(name: str) -> str:
    return name.split("#", 1)[0]
