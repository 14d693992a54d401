"""Privacy-preserving location sharing for vehicular social networks."""

__version__ = "0.1.0"
