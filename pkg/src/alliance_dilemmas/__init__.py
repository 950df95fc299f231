"""Alliance dilemmas in many-player zero-sum games, and contract-augmented learners."""

__version__ = "0.1.0"
