"""Toolkit for studying how subject-verb agreement emerges over LM training.

Generates condition-controlled minimal pairs, scores them under n-gram
oracles and external neural checkpoints, disaggregates accuracy by
experimental condition, and labels heuristic-aligned learning phases.
"""

__version__ = "0.1.0"
