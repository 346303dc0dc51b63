"""Verification toolkit for mechanical Hamiltonians on the 2-torus."""
