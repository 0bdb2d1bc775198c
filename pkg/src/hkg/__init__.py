"""Clickstream-to-knowledge-graph pipeline with a heterogeneous GraphSAGE
link classifier predicting page pass/fail per student."""

__version__ = "0.1.0"
