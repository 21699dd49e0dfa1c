"""Embedding exporter: pretrained encoders -> GLAEMB tables.

Produces the image and text vector tables the classifier pipeline consumes,
using a deep residual network's penultimate layer for fundus photographs
and a multilingual transformer with mean pooling for clinical narratives.
"""

__version__ = "0.1.0"
