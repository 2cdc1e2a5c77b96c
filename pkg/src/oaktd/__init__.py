"""Online attentive kernel-based TD learning with kernel and tile-coding baselines."""

__version__ = "0.1.0"
