"""Mixed finite elements for the Hodge Laplacian and Hodge heat equation on
flat domains and interpolated hypersurfaces."""

__version__ = "0.1.0"
