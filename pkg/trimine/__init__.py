"""
trimine - Offline and Online Triplet Mining with Extreme Distances

Metric-learning toolkit: class-balanced online losses (batch all, semi-hard,
extreme-distance pairings, NCA, Proxy-NCA, easy positive, distance weighted
sampling), offline triplet mining over a pretrained feature space, and
Recall@k evaluation, driven by a file-based command-line pipeline.
"""

__version__ = "0.1.0"
__author__ = "trimine contributors"
