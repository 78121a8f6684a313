"""Behavioural predispositions for per-cluster activity recognition."""
