"""
Open-set semi-supervised self-training simulator.

Synthetic open-set scenarios, a small softmax network trained by hand-derived
gradients, EMA teacher/student self-training with online and offline OOD
filtering of pseudo-labels, and the OOD-detection metrics used to evaluate it.
"""

__version__ = "0.1.0"
