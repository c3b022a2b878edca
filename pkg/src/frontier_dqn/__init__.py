"""Deep-Q frontier selection for autonomous exploration on 2D occupancy grids."""

__version__ = "0.1.0"
