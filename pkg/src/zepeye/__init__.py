"""Eye center localization from zero-crossing encoded image projections."""

__version__ = "0.1.0"
