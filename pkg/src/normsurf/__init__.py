"""Numerical toolkit for saddle surfaces in finite-dimensional normed spaces.

Submodules: ``norms`` (Minkowski norms and their Legendre transforms),
``surfaces`` (immersed charts and the saddle test), ``geodesics``
(integration, shooting, competitors), ``calibrator`` (calibrating functions
along geodesics), ``embedding`` (isometric saddle embeddings of 2D metrics
into 4D normed spaces), ``convexgeom`` (planar perimeters, sharp cones,
geodesic lines on convex surfaces) and ``cli``.
"""
__version__ = "0.1.0"

from . import norms, surfaces, geodesics, calibrator, embedding, convexgeom  # noqa: E402,F401
