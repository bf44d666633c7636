"""Radiation trapping and Zeeman-coherence loss in optically thick EIT vapors."""

__version__ = "0.1.0"
