"""HTTP scoring service: wraps a text-to-image generator plus aesthetic and
alignment scorers behind a fixed JSON protocol, with a deterministic mock mode
that needs no accelerator."""

__version__ = "0.1.0"
