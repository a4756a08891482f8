"""Multispectral detection ensembling: box fusion, evaluation, registration."""

__version__ = "0.1.0"
