"""Desk-scale joint contrastive training on a mixture of labeled
multi-camera and pseudo-labeled single-camera re-identification data."""

__version__ = "0.1.0"
