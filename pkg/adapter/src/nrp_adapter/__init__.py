"""Reference external scorer speaking the ``nrp-scorer/1`` protocol."""

from .adapter import AdapterConfig, echo_score, serve, tokenize

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "echo_score", "serve", "tokenize"]
