"""Prompt-embedding optimization engine: separable CMA-ES and Adam against a
weighted aesthetic/alignment fitness, with the generate-and-score backend
isolated behind a wire protocol."""

__version__ = "0.1.0"
