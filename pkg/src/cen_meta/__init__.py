"""STP, CSTP variance and SIR meta distribution for cache-enabled multi-antenna networks."""

from .model import Fixed, Flexible, NetworkConfig, default_config

__all__ = ["Fixed", "Flexible", "NetworkConfig", "default_config"]
__version__ = "0.1.0"
