"""Paraphrase generation by constrained decoding over a next-token model.

The decoder blocks, for a single step, the source word that would continue
a copied prefix, which forces generation off the parroting path while an
ordinary language model keeps the output fluent. Candidates produced under
differently sampled blocking dictionaries are re-ranked by a composite of
embedding similarity and surface dissimilarity.
"""

__version__ = "0.1.0"
