"""Evidence retrieval pipeline for fact-checking complex claims.

Stages: chunk evidence articles into token spans, select lexical (BM25)
candidates, derive contrastive training examples from several supervision
signals, train a linear adapter over frozen embeddings with a softmax
contrastive objective, and evaluate retrieval plus downstream veracity.
"""

__version__ = "0.1.0"
