"""Generalized method of lines for semilinear elliptic problems on annuli."""
