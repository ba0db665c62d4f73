"""Semi-supervised training engine for imbalanced classification.

Implements blended consistency losses (CL, SCL, ABCL) on top of a small
reverse-mode autodiff engine, with a synthetic imbalanced-data harness,
imbalance-aware metrics, and a CLI for comparison/sweep/ablation experiments.
"""

__version__ = "0.1.0"
