"""Breath-synchronised music envelopes and the physiological analysis around them."""

__version__ = "0.1.0"
