"""Symbolic equivalence checker and modal-logic model checker for the finite
applied pi-calculus with mismatch."""

__version__ = "0.1.0"
