"""Formal and simultaneous linearization of germs of biholomorphisms of C^n."""

__version__ = "0.1.0"
