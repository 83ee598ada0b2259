"""Relation-clustered contrastive learning for inductive relation prediction."""

__version__ = "0.1.0"
