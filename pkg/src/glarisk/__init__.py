"""Multimodal glaucoma-risk classification pipeline.

Parses clinical fundus records and OCT biomarker tables, fuses structured,
textual, judgment, and image modalities into one dense vector per instance,
trains a histogram-based second-order gradient-boosted-tree classifier, and
reports metrics, modality ablations, and feature importance.
"""

__version__ = "0.1.0"
