"""Fleet-mix electric vehicle routing with limited off-hour delivery."""

__version__ = "0.1.0"
