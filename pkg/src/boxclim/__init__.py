"""Linear box-model climate emulators and the tools built around them."""

__version__ = "0.1.0"
