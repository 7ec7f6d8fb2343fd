"""Cone-type grammars and local limit analysis of random walks on finitely
described infinite labelled graphs."""

__version__ = "0.1.0"
