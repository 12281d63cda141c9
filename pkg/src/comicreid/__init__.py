"""Comic character re-identification toolkit.

Pipeline: detection ingest -> panel-sequence datasets -> identity-aware
contrastive pretraining -> metric-learning fine-tuning -> retrieval
evaluation -> clustering-based identity suggestion, plus an annotation
service for human curation.
"""

__version__ = "0.1.0"
