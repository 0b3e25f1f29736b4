"""Vertical federated logistic regression: residue label-inference attack and defenses."""

__version__ = "0.1.0"
