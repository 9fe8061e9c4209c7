"""Deterministic simulator: worlds, sensors, localization, vehicles, codec and
experiment runner."""
