"""Exact-diagonalization laboratory for weakly perturbed Hamiltonians.

The package simulates ``H_lam = H0 + lam * W`` with ``W`` a Wigner matrix,
evaluates the deterministic relaxation predictions (kernel state, terminal
state, microcanonical state, remainder) in closed form and checks them, as
well as the underlying two-resolvent global law, against exact dynamics.
"""

__version__ = "0.1.0"
