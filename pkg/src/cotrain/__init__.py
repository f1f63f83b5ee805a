"""Deep co-training of multiple neural views for semi-supervised classification."""

__version__ = "0.1.0"
