"""Prompt-tuning experiments for egocentric video-language dual encoders."""

__version__ = "1.0.0"
__author__ = "Platform Team"
__description__ = "Cross-modal prompt synthesis from a shared prompt basis, with baselines and ablations"
