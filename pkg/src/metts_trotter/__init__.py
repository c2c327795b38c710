"""Minimally entangled typical thermal state sampling for Bose-Hubbard chains,
with charge-conserving Trotter-gate basis rotations."""

__version__ = "0.1.0"
