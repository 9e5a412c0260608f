"""Algorithms that use portfolios of k predictions: warm-started matching,
online load balancing, and non-clairvoyant scheduling, plus k-median ERM for
learning the portfolios."""

__version__ = "0.1.0"
