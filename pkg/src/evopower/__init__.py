"""Grammar-based neuroevolution of power-efficient feed-forward classifiers."""

__version__ = "0.1.0"
