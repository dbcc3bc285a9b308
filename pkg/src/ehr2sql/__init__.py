"""Reliable text-to-SQL for EHR question answering.

Two-stage pipeline: retrieval-augmented candidate generation against pluggable
LLM backends, then execution-based cross-model agreement validation, scored
with a cost-penalized reliability metric.
"""

__version__ = "0.1.0"
