"""Logging, console output and settings helpers."""
