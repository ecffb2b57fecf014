"""Surgical scene perception: tool tracking, stereo depth, tissue fusion and metrics."""

__version__ = "0.1.0"
