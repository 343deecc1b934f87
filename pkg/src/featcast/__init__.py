"""Static time-series features from a window-classifier CNN, plus forecast combination.

The library trains a small 1D convolutional classifier in which every time
series is its own class over sliding windows, harvests the penultimate dense
layer as a per-window feature vector, and aggregates those vectors into one
static feature vector per series.  Those features drive a gradient-boosted
meta-learner that blends a pool of classical forecasters, and a set of
feature-quality diagnostics (stability, clustering, 2-D projection).
"""

__version__ = "0.1.0"
