"""Sequential sampling of junction trees for decomposable graphs."""

__version__ = "0.1.0"
