"""Growing neural networks with gradient-maximizing initialization of new neurons."""
__version__ = "0.1.0"
