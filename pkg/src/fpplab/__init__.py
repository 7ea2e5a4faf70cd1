"""Simulation laboratory for planar rotationally invariant first passage
percolation."""
from .field import FieldSpec, KernelSpec, MarkSpec, RegionSelector, sample_field
from .geometry import Parallelogram, Point, Rect, VStrip
from .models import Geodesic, ModelInstance, ModelSpec, RiemannianSpec, build_model

__all__ = [
    "FieldSpec", "KernelSpec", "MarkSpec", "RegionSelector", "sample_field",
    "Parallelogram", "Point", "Rect", "VStrip",
    "Geodesic", "ModelInstance", "ModelSpec", "RiemannianSpec", "build_model",
]
__version__ = "0.1.0"
