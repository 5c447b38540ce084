"""Adaptive exercise goal setting: fitness-fatigue simulation, actor-critic agents and experiments."""

__version__ = "0.1.0"
