"""Scorers that feed the curation pipeline: scene top-5 evidence, face boxes,
grey flags, and five-crop country score vectors, plus a desk-scale trainer.

The bridge only *emits* evidence and scores in the pipeline's file formats;
every decision rule (thresholds, fusion, filtering) lives on the consumer
side, so there is exactly one implementation of each rule.
"""

__version__ = "0.1.0"
