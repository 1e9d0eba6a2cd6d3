"""Fock-space cages in kinetically constrained spin chains."""
