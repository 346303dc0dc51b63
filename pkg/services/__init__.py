"""Numerical services: systems, flows, orbits, perturbations, manifolds and the experiment runner."""
