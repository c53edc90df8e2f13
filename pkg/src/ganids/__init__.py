"""Minority-class traffic augmentation with a transfer-pretrained WGAN-GP
and a histogram gradient-boosted-tree intrusion detector."""

__version__ = "0.1.0"
