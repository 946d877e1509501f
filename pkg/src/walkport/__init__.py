"""State-vector simulation of quantum teleportation driven by coined quantum walks."""

__version__ = "0.1.0"
