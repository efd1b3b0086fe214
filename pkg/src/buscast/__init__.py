"""Stop-level bus ridership forecasting with global and region-wise models."""

__version__ = "0.1.0"
