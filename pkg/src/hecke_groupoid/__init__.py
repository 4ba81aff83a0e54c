"""Coset groupoids of Hecke pairs (PSL2(Z), PGL2(Z[1/p])^+), the p-adic tree,
cylinder sets and Monte Carlo Hecke kernels."""

__version__ = "0.1.0"
