"""Rydberg-to-photonic W-state transfer in a three-mode cavity."""
