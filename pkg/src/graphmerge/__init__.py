"""Graph-based embedding re-parameterization for multilingual NMT.

Pipeline: parallel corpora -> word alignments -> cross-lingual equivalence
graph -> multi-hop message passing over the embedding table -> translation
model training and analysis.
"""

__version__ = "0.1.0"
