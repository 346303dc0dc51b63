"""Utilities package for bumpy_torus."""
