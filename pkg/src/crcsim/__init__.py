"""Slotted-time simulator for online en-route content caching."""
__version__ = "0.1.0"
