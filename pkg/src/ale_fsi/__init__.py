"""ALE FSI - monolithic fluid-structure solver for particles in 2D channels."""

__version__ = "0.1.0"
