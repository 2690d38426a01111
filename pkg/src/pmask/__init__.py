"""Probabilistic masking simulation: decision, fairness and a masking-tolerance metric."""
