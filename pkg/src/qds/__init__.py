"""Toolkit for query-focused dialogue summarization data and evaluation.

Builds query-dialogue-summary triples from dialogue-summary pairs with a
pluggable generation backend, assembles length-aware instruction corpora,
scores summaries with deterministic overlap metrics, and runs judge and
annotation protocols.
"""

__version__ = "0.1.0"
