"""Video-context human mask inference and weighted self-training at desk scale."""

__version__ = "0.1.0"
