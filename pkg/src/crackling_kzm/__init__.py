"""Crackling-noise functional networks, K-string sign chains and Kibble-Zurek scaling."""

__version__ = "0.1.0"
