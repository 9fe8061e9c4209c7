"""Cooperative guidance of a sensor-poor vehicle by a mapping vehicle."""

__version__ = "0.1.0"
