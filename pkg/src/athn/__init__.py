"""Autonomous truck hub network planning: routes, job schedules and hub capacities."""

__version__ = "0.1.0"
