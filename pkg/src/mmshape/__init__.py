"""Shape optimization of obstacles in Stokes flow by the method of mappings."""

__version__ = "0.1.0"
