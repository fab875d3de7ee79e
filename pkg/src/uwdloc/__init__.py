"""Direct localization of an underwater acoustic source from multi-receiver recordings."""

__version__ = "0.1.0"
