"""Simulated conveyor pile sorting with self-supervised grasp learning."""

__version__ = "0.1.0"
