"""Digital tissue phenotyping from cell maps: Delaunay cell networks,
connection-frequency phenotypes, slide signatures and their survival and
outcome statistics."""

__version__ = "0.1.0"
