"""
Geometry app - pinhole cameras, triangle meshes, rendering and visibility.
"""
