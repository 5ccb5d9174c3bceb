"""Hybrid recommendation engine with personalized email notifications.

Subpackages cover the full pipeline: catalog ingestion and synthetic data,
the sparse linear algebra core, content-based and collaborative models,
the blended recommender, the evaluation harness, notification scheduling,
the HTTP service, and the operator CLI.
"""

__version__ = "0.1.0"
