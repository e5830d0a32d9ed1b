"""Condition generation, conditional-diffusion blocks, detector fusion blocks
and evaluation metrics for PCB defect synthesis and inspection."""

__version__ = "0.1.0"
