"""Granular topic modeling toolkit.

Pipeline: embed documents, K-means them into small clusters, have an LLM name
and assign granular topics per cluster, merge near-duplicate topics, then
evaluate with gold-label clustering metrics or LLM judges.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    OTHER,
    BusinessDefinition,
    Clustering,
    Document,
    Topic,
    TopicAssignment,
    TopicModelRun,
    load_corpus,
    load_run,
    save_run,
)
