"""parkcast: sensor-free campus parking availability forecasting toolkit."""

__version__ = "0.1.0"
