"""Interpolation-free tri-plane lifting for 3D voxel reasoning.

A small, dependency-light stack: a numpy-backed autodiff engine, the
tri-plane backbone with broadcast-summation lifting, adaptive positional
modulation, a low-resolution volumetric fusion branch, an analytic FLOPs
model, synthetic shape tasks with a trainer, and a CPU benchmark harness.
"""

__version__ = "0.1.0"
