"""Hadamard parametrix on a metric chart."""
