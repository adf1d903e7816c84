"""Toolkit for building, curating, and evaluating country-recognition image datasets.

Pipeline stages (each one a CLI subcommand, all reading/writing line-oriented
manifests): query generation, country assignment, evidence-driven filtering,
image normalization, class grouping, splitting, class-weight computation, and
five-crop fusion evaluation.
"""

__version__ = "0.1.0"
