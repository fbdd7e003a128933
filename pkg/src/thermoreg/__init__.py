"""Oral-temperature regression from infrared thermography features."""

__version__ = "0.1.0"
