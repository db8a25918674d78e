"""Temporally consistent review-graph benchmark toolkit.

Builds a bipartite user-item review graph with strict temporal indexes,
profiles user style, retrieves bounded product-anchored evidence, prompts a
pluggable generation endpoint, and evaluates outputs with text-overlap
metrics plus macro-level dissonance analysis.
"""

__version__ = "0.1.0"
