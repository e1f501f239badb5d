"""Meta-reasoning prompt router and benchmark harness."""

__version__ = "0.1.0"
