"""Biorthogonal Laurent polynomials on the unit circle and their Geronimus-Uvarov transforms."""
