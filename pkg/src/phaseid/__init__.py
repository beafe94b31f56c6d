"""Phase connectivity identification of single-phase LV consumers from voltage time series."""

__version__ = "0.1.0"
