"""LTL-to-AIGER toolkit: pattern mining, verified dataset generation,
hierarchical Transformer training, and built-in model checking."""

__version__ = "0.1.0"
