"""Indian Sign Language pose and gesture recognition toolkit."""

__version__ = "1.0.0"
