"""turbulink: temporal-mode photon propagation through turbulent free-space links."""

__version__ = "0.1.0"
