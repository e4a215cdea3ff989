"""Vehicle trajectory tracking: flatness-based and model-free control workbench."""

__version__ = "0.1.0"
