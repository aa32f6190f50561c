"""Self-calibration by lifting: recover (h, x) from y = diag(Bh) A x + w."""

__version__ = "0.1.0"
